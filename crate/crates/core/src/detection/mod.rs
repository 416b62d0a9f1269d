//! GLRT statistics, their null distributions and the threshold test.

pub mod hypoexp;

use nalgebra as na;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

pub use hypoexp::{Evaluation, Hypoexponential};

use crate::error::{Error, Result};
use crate::estimation::{EstimatorKind, MatchedFilterBank};
use crate::geometry::{DelayVector, SceneConfig};
use crate::scalar::{Real, C};
use crate::synth::{path_loss_sq, steering, Hypothesis};
use crate::waveform::WaveformBank;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    MimoExtended,
    MimoPoint,
    PaExtended,
    PaPoint,
}

impl DetectorKind {
    pub fn for_estimator(kind: EstimatorKind) -> Self {
        match kind {
            EstimatorKind::MimoExtendedMap | EstimatorKind::MimoExtendedAve => Self::MimoExtended,
            EstimatorKind::MimoPoint => Self::MimoPoint,
            EstimatorKind::PaExtendedMap | EstimatorKind::PaExtendedAve => Self::PaExtended,
            EstimatorKind::PaPoint => Self::PaPoint,
        }
    }
}

/// How the noise-only law of a statistic is derived.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NullModel {
    /// Replicas assumed orthogonal with energy `1/T_s`.
    Orthogonal,
    /// Uses the actual sampled Gram matrices at the candidate delays.
    #[default]
    ExactGram,
}

/// Distribution of a statistic under `H0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NullLaw<T> {
    Hypoexponential(Hypoexponential<T>),
    Exponential { mean: T },
}

impl<T: Real> NullLaw<T> {
    pub fn sf(&self, x: T) -> T {
        match self {
            NullLaw::Hypoexponential(h) => h.sf(x),
            NullLaw::Exponential { mean } => {
                if x <= T::zero() {
                    T::one()
                } else {
                    (-x / *mean).exp()
                }
            }
        }
    }

    pub fn cdf(&self, x: T) -> T {
        match self {
            NullLaw::Hypoexponential(h) => h.cdf(x),
            NullLaw::Exponential { mean } => {
                if x <= T::zero() {
                    T::zero()
                } else {
                    -(-x / *mean).exp_m1()
                }
            }
        }
    }

    /// Threshold exceeded with probability `pfa`.
    pub fn upper_quantile(&self, pfa: T) -> T {
        match self {
            NullLaw::Hypoexponential(h) => h.upper_quantile(pfa),
            NullLaw::Exponential { mean } => *mean * (T::one() / pfa).ln(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome<T> {
    pub statistic: T,
    pub threshold: T,
    pub decision: Hypothesis,
    pub pfa: T,
    pub kind: DetectorKind,
}

fn czero<T: Real>() -> C<T> {
    Complex::new(T::zero(), T::zero())
}

/// Point-target weights `exp(j 2 pi f_c tau) tau^{-beta}`.
fn point_weights<T: Real>(scene: &SceneConfig<T>, tau: &DelayVector<T>) -> Vec<C<T>> {
    tau.as_slice()
        .iter()
        .map(|&t| T::cis_cycles(scene.carrier_hz * t) * (-(scene.path_loss_exp * t.ln())).exp())
        .collect()
}

/// Test statistic evaluated on matched-filter outputs at the estimated delays.
pub fn statistic<T: Real>(kind: DetectorKind, mf: &MatchedFilterBank<T>, scene: &SceneConfig<T>) -> T {
    match kind {
        DetectorKind::MimoExtended => mf.y.iter().zip(&mf.l).map(|(y, l)| y.norm_sqr() / *l).sum(),
        DetectorKind::MimoPoint => {
            let w = point_weights(scene, &mf.candidate);
            w.iter().zip(&mf.y).fold(czero(), |s, (w, y)| s + *w * *y).norm_sqr()
        }
        DetectorKind::PaExtended | DetectorKind::PaPoint => {
            let s = steering(scene, &mf.candidate, kind == DetectorKind::PaPoint);
            s.iter()
                .zip(&mf.common)
                .fold(czero(), |acc, (s, y)| acc + s.conj() * *y)
                .norm_sqr()
        }
    }
}

fn to_c64<T: Real>(z: C<T>) -> Complex<f64> {
    Complex::new(z.re.to_f64v(), z.im.to_f64v())
}

/// Null law of `statistic` at fixed delays `tau`.
pub fn null_law<T: Real>(
    kind: DetectorKind,
    tau: &DelayVector<T>,
    scene: &SceneConfig<T>,
    bank: &WaveformBank<T>,
    energy: T,
    model: NullModel,
) -> Result<NullLaw<T>> {
    let (nt, nr) = (scene.nt(), scene.nr());
    if tau.nt() != nt || tau.nr() != nr || bank.count() < nt {
        return Err(Error::Dimension("delays, scene and bank disagree".into()));
    }
    let ts = bank.sample_period();
    let inv_ts = T::one() / ts;
    match kind {
        DetectorKind::MimoExtended => {
            let snr0 = energy / (ts * T::from_len(nt));
            let l: Vec<T> = tau.as_slice().iter().map(|&t| snr0 + path_loss_sq(scene, t)).collect();
            let rates = match model {
                NullModel::Orthogonal => l.iter().map(|l| ts * *l).collect(),
                NullModel::ExactGram => {
                    let mut rates = Vec::with_capacity(nt * nr);
                    for n in 0..nr {
                        let g = bank.gram_at(tau, n);
                        let d: Vec<f64> = (0..nt).map(|m| l[m * nr + n].to_f64v().sqrt()).collect();
                        let mat =
                            na::DMatrix::<Complex<f64>>::from_fn(nt, nt, |i, j| to_c64(g[i * nt + j]) / (d[i] * d[j]));
                        let eig = mat.symmetric_eigenvalues();
                        let top = eig.iter().copied().fold(0.0f64, f64::max);
                        rates.extend(eig.iter().filter(|&&mu| mu > 1e-12 * top).map(|&mu| T::of(1.0 / mu)));
                    }
                    rates
                }
            };
            if rates.is_empty() {
                return Err(Error::Dimension("no replica energy inside the sampling window".into()));
            }
            Ok(NullLaw::Hypoexponential(Hypoexponential::new(rates)?))
        }
        DetectorKind::MimoPoint => {
            let w = point_weights(scene, tau);
            let mean = match model {
                NullModel::Orthogonal => w.iter().map(|w| w.norm_sqr()).sum::<T>() * inv_ts,
                NullModel::ExactGram => {
                    let mut v = czero();
                    for n in 0..nr {
                        let g = bank.gram_at(tau, n);
                        for a in 0..nt {
                            for b in 0..nt {
                                v = v + w[a * nr + n] * w[b * nr + n].conj() * g[b * nt + a];
                            }
                        }
                    }
                    v.re
                }
            };
            Ok(NullLaw::Exponential { mean })
        }
        DetectorKind::PaExtended | DetectorKind::PaPoint => {
            let s = steering(scene, tau, kind == DetectorKind::PaPoint);
            let s2: T = s.iter().map(|v| v.norm_sqr()).sum();
            let energy_per_sample = match model {
                NullModel::Orthogonal => inv_ts,
                NullModel::ExactGram => {
                    let t11 = tau.get(0, 0);
                    (0..bank.num_samples()).map(|k| bank.sample(0, k, t11).norm_sqr()).sum()
                }
            };
            Ok(NullLaw::Exponential {
                mean: s2 * energy_per_sample,
            })
        }
    }
}

/// Threshold for false-alarm probability `pfa` at delays `tau`.
pub fn threshold<T: Real>(
    kind: DetectorKind,
    tau: &DelayVector<T>,
    scene: &SceneConfig<T>,
    bank: &WaveformBank<T>,
    energy: T,
    pfa: T,
    model: NullModel,
) -> Result<T> {
    if !(pfa > T::zero() && pfa < T::one()) {
        return Err(Error::PfaOutOfRange(pfa.to_f64v()));
    }
    Ok(null_law(kind, tau, scene, bank, energy, model)?.upper_quantile(pfa))
}

/// Decides `H1` when the statistic strictly exceeds the threshold.
pub fn detect<T: Real>(
    kind: DetectorKind,
    estimator: Option<EstimatorKind>,
    mf: &MatchedFilterBank<T>,
    scene: &SceneConfig<T>,
    bank: &WaveformBank<T>,
    pfa: T,
    model: NullModel,
) -> Result<DetectionOutcome<T>> {
    if let Some(e) = estimator {
        if DetectorKind::for_estimator(e) != kind {
            return Err(Error::KindMismatch(format!("{e:?} delays fed to a {kind:?} detector")));
        }
    }
    let theta = threshold(kind, &mf.candidate, scene, bank, mf.energy, pfa, model)?;
    let stat = statistic(kind, mf, scene);
    Ok(decide(kind, stat, theta, pfa))
}

pub fn decide<T: Real>(kind: DetectorKind, statistic: T, threshold: T, pfa: T) -> DetectionOutcome<T> {
    let decision = if statistic > threshold {
        Hypothesis::H1
    } else {
        Hypothesis::H0
    };
    DetectionOutcome {
        statistic,
        threshold,
        decision,
        pfa,
        kind,
    }
}
