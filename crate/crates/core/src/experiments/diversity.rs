//! Log-log slope fits and the small-ball diversity check.

use serde::{Deserialize, Serialize};

use super::runner::{run_trials, CurvePoint};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::synth::{Role, TrialSeed};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityFit {
    /// Decades of probability lost per decade of SNR (positive for falling curves).
    pub slope: f64,
    pub intercept: f64,
    pub n_points: usize,
    pub r_squared: f64,
}

/// Least-squares line through `(log10 x, log10 y)`, negated slope.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<DiversityFit> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.log10(), b.log10()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Config(format!(
            "{} usable points, at least 3 needed for a slope",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let b = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(DiversityFit {
        slope: -b,
        intercept: my - b * mx,
        n_points: pts.len(),
        r_squared: r2,
    })
}

/// Slope of a miss-probability curve (x in dB) over points with `lo <= P_md <= hi`.
pub fn fit_diversity(points: &[CurvePoint], lo: f64, hi: f64) -> Result<DiversityFit> {
    let sel: Vec<&CurvePoint> = points.iter().filter(|p| p.y >= lo && p.y <= hi).collect();
    let x: Vec<f64> = sel.iter().map(|p| 10f64.powf(p.x / 10.0)).collect();
    let y: Vec<f64> = sel.iter().map(|p| p.y).collect();
    fit_loglog(&x, &y)
}

/// Settings of the small-ball experiment: `Y_m = rho mu_m + sigma z_m` with
/// `mu_m ~ N(0, sigma_mu[m]^2)`, and the event `sum Y_m^2 < gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallBall {
    pub sigma: f64,
    pub sigma_mu: Vec<f64>,
    pub gamma: f64,
    pub rho: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl SmallBall {
    /// Defaults that sit in the asymptotic regime for `m` up to 4.
    pub fn standard(m: usize, trials: usize, seed: u64) -> Self {
        SmallBall {
            sigma: 1.0,
            sigma_mu: vec![1.0; m],
            gamma: m as f64,
            rho: (0..7).map(|i| 3.0 * 5f64.powf(i as f64 / 6.0)).collect(),
            trials,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallBallResult {
    pub rho: Vec<f64>,
    pub probability: Vec<f64>,
    pub hits: Vec<usize>,
    /// Fit over points with at least 100 hits.
    pub fit: DiversityFit,
}

/// Estimates `E_mu[P(sum Y_m^2 < gamma)]` on the `rho` grid and fits its decay exponent.
pub fn verify_lemma6(cfg: &SmallBall) -> Result<SmallBallResult> {
    let m = cfg.sigma_mu.len();
    if m == 0 || cfg.trials == 0 || cfg.rho.is_empty() {
        return Err(Error::Config(
            "small-ball check needs a dimension, trials and a rho grid".into(),
        ));
    }
    let mut probability = Vec::new();
    let mut hits = Vec::new();
    for (i, &rho) in cfg.rho.iter().enumerate() {
        let chunk = 10_000usize;
        let chunks = cfg.trials.div_ceil(chunk);
        let counts = run_trials(0, chunks, |c| {
            let mut rng = TrialSeed::new(cfg.seed, i as u64, c).rng(Role::Noise);
            let n = chunk.min(cfg.trials - c as usize * chunk);
            let mut h = 0usize;
            for _ in 0..n {
                let mut s = 0.0;
                for sm in &cfg.sigma_mu {
                    let mu = sm * f64::std_normal(&mut rng);
                    let y = rho * mu + cfg.sigma * f64::std_normal(&mut rng);
                    s += y * y;
                }
                if s < cfg.gamma {
                    h += 1;
                }
            }
            h
        });
        let h: usize = counts.iter().sum();
        hits.push(h);
        probability.push(h as f64 / cfg.trials as f64);
    }
    let keep: Vec<usize> = (0..cfg.rho.len()).filter(|&i| hits[i] >= 100).collect();
    let x: Vec<f64> = keep.iter().map(|&i| cfg.rho[i]).collect();
    let y: Vec<f64> = keep.iter().map(|&i| probability[i]).collect();
    let fit = fit_loglog(&x, &y)?;
    Ok(SmallBallResult {
        rho: cfg.rho.clone(),
        probability,
        hits,
        fit,
    })
}
