//! Monte Carlo curves. Trials run in parallel; per-trial results are collected
//! in index order so the output does not depend on the thread count.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentKind, ExperimentSpec, Setup};
use crate::detection::{null_law, statistic, NullLaw};
use crate::error::{Error, Result};
use crate::estimation::{estimate, Templates};
use crate::geometry::DelayVector;
use crate::localization::{localize, normalized_position_error};
use crate::synth::{energy_for_snr, synth, Hypothesis, SnapshotMatrix, TrialSeed};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    pub stderr: f64,
    pub n_trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub spec_hash: String,
    pub seed: u64,
    pub version: String,
    pub wall_time_s: f64,
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveResult {
    pub name: String,
    pub kind: ExperimentKind,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<CurvePoint>,
    pub meta: CurveMeta,
}

/// Runs `trials` independent jobs and returns their results in index order.
pub fn run_trials<R: Send>(first: u64, trials: usize, f: impl Fn(u64) -> R + Sync) -> Vec<R> {
    (0..trials as u64).into_par_iter().map(|t| f(first + t)).collect()
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn binomial(hits: usize, n: usize) -> (f64, f64) {
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

fn meta(
    spec: &ExperimentSpec,
    setup: &Setup,
    start: Instant,
    mut extra: BTreeMap<String, serde_json::Value>,
) -> CurveMeta {
    extra.insert("window_covers_grid".into(), setup.window_covers_grid.into());
    extra.insert("sample_period_s".into(), setup.bank.sample_period().into());
    extra.insert("gate_s".into(), setup.bank.gate().into());
    CurveMeta {
        spec_hash: spec.hash(),
        seed: spec.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        extra,
    }
}

fn energy(spec: &ExperimentSpec, setup: &Setup, snr_db: f64) -> f64 {
    energy_for_snr(
        10f64.powf(snr_db / 10.0),
        spec.snr_convention,
        &setup.scene,
        &setup.bank,
        &setup.truth,
    )
}

fn draw(
    spec: &ExperimentSpec,
    setup: &Setup,
    hyp: Hypothesis,
    energy: f64,
    seed: TrialSeed,
) -> Result<SnapshotMatrix<f64>> {
    synth(
        spec.model(),
        hyp,
        &setup.scene,
        &setup.bank,
        &setup.truth,
        energy,
        spec.extended_law,
        spec.point_law,
        seed,
    )
}

/// Delay estimate of one snapshot, or the true delays for genie runs.
fn delays(spec: &ExperimentSpec, setup: &Setup, snap: &SnapshotMatrix<f64>, energy: f64) -> Result<DelayVector<f64>> {
    if spec.genie_delays {
        return Ok(setup.truth.clone());
    }
    let e = estimate(
        spec.estimator,
        snap,
        &setup.scene,
        &setup.bank,
        energy,
        &setup.grid,
        &spec.objective,
    )?;
    Ok(e.tau_hat)
}

/// Normalised delay error `(1/(N_t N_r)) sum ((tau_hat - tau) / tau)^2`.
pub fn normalized_delay_error(est: &DelayVector<f64>, truth: &DelayVector<f64>) -> f64 {
    est.as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(e, t)| ((e - t) / t).powi(2))
        .sum::<f64>()
        / truth.as_slice().len() as f64
}

fn collect<R>(v: Vec<Result<R>>) -> Result<Vec<R>> {
    v.into_iter().collect()
}

pub fn run_mse_curve(spec: &ExperimentSpec) -> Result<CurveResult> {
    let start = Instant::now();
    let setup = Setup::new(spec)?;
    let mut points = Vec::new();
    for (i, &snr) in spec.snr_db.iter().enumerate() {
        let e = energy(spec, &setup, snr);
        let errs = collect(run_trials(0, spec.trials, |t| {
            let snap = draw(spec, &setup, Hypothesis::H1, e, TrialSeed::new(spec.seed, i as u64, t))?;
            Ok(normalized_delay_error(&delays(spec, &setup, &snap, e)?, &setup.truth))
        }))?;
        let (y, se) = mean_stderr(&errs);
        points.push(CurvePoint {
            x: snr,
            y,
            stderr: se,
            n_trials: errs.len(),
        });
    }
    Ok(CurveResult {
        name: spec.name.clone(),
        kind: ExperimentKind::Mse,
        x_label: "snr_db".into(),
        y_label: "normalized_delay_mse".into(),
        points,
        meta: meta(spec, &setup, start, BTreeMap::new()),
    })
}

/// Statistic and its null law for one snapshot.
fn stat_and_law(
    spec: &ExperimentSpec,
    setup: &Setup,
    snap: &SnapshotMatrix<f64>,
    e: f64,
    genie: Option<&(Templates<f64>, NullLaw<f64>)>,
) -> Result<(f64, Option<NullLaw<f64>>)> {
    let kind = spec.detector();
    if let Some((tpl, _)) = genie {
        let mf = tpl.filter(snap, &setup.scene, &setup.bank, e);
        return Ok((statistic(kind, &mf, &setup.scene), None));
    }
    let tau = delays(spec, setup, snap, e)?;
    let mf = Templates::new(&setup.scene, &setup.bank, &tau)?.filter(snap, &setup.scene, &setup.bank, e);
    let law = null_law(kind, &tau, &setup.scene, &setup.bank, e, spec.null_model)?;
    Ok((statistic(kind, &mf, &setup.scene), Some(law)))
}

fn genie_parts(spec: &ExperimentSpec, setup: &Setup, e: f64) -> Result<Option<(Templates<f64>, NullLaw<f64>)>> {
    if !spec.genie_delays {
        return Ok(None);
    }
    let tpl = Templates::new(&setup.scene, &setup.bank, &setup.truth)?;
    let law = null_law(
        spec.detector(),
        &setup.truth,
        &setup.scene,
        &setup.bank,
        e,
        spec.null_model,
    )?;
    Ok(Some((tpl, law)))
}

/// Miss probability against SNR at the configured false-alarm rate.
pub fn run_pmd_curve(spec: &ExperimentSpec) -> Result<CurveResult> {
    let start = Instant::now();
    let setup = Setup::new(spec)?;
    let mut points = Vec::new();
    for (i, &snr) in spec.snr_db.iter().enumerate() {
        let e = energy(spec, &setup, snr);
        let genie = genie_parts(spec, &setup, e)?;
        let theta_genie = genie.as_ref().map(|(_, law)| law.upper_quantile(spec.pfa));
        let misses = collect(run_trials(0, spec.trials, |t| {
            let snap = draw(spec, &setup, Hypothesis::H1, e, TrialSeed::new(spec.seed, i as u64, t))?;
            let (stat, law) = stat_and_law(spec, &setup, &snap, e, genie.as_ref())?;
            let theta = match law {
                Some(l) => l.upper_quantile(spec.pfa),
                None => theta_genie.expect("genie threshold"),
            };
            Ok(!(stat > theta))
        }))?;
        let (y, se) = binomial(misses.iter().filter(|m| **m).count(), misses.len());
        points.push(CurvePoint {
            x: snr,
            y,
            stderr: se,
            n_trials: misses.len(),
        });
    }
    Ok(CurveResult {
        name: spec.name.clone(),
        kind: ExperimentKind::Pmd,
        x_label: "snr_db".into(),
        y_label: "miss_probability".into(),
        points,
        meta: meta(spec, &setup, start, BTreeMap::new()),
    })
}

/// Detection probability against false-alarm rate at `roc_snr_db`. Statistics are
/// computed once per trial and compared with every threshold.
pub fn run_roc(spec: &ExperimentSpec) -> Result<CurveResult> {
    let start = Instant::now();
    let setup = Setup::new(spec)?;
    let e = energy(spec, &setup, spec.roc_snr_db);
    let genie = genie_parts(spec, &setup, e)?;
    let thresholds = |law: &NullLaw<f64>| -> Vec<f64> {
        spec.roc_pfa
            .iter()
            .map(|&p| if p >= 1.0 { 0.0 } else { law.upper_quantile(p) })
            .collect()
    };
    let genie_theta = genie.as_ref().map(|(_, law)| thresholds(law));
    let hits = collect(run_trials(0, spec.trials, |t| {
        let snap = draw(spec, &setup, Hypothesis::H1, e, TrialSeed::new(spec.seed, 0, t))?;
        let (stat, law) = stat_and_law(spec, &setup, &snap, e, genie.as_ref())?;
        let theta = match law {
            Some(l) => thresholds(&l),
            None => genie_theta.clone().expect("genie thresholds"),
        };
        Ok(theta.iter().map(|th| stat > *th).collect::<Vec<bool>>())
    }))?;
    let points = spec
        .roc_pfa
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let (y, se) = binomial(hits.iter().filter(|h| h[j]).count(), hits.len());
            CurvePoint {
                x: p,
                y,
                stderr: se,
                n_trials: hits.len(),
            }
        })
        .collect();
    let mut extra = BTreeMap::new();
    extra.insert("snr_db".into(), spec.roc_snr_db.into());
    Ok(CurveResult {
        name: spec.name.clone(),
        kind: ExperimentKind::Roc,
        x_label: "pfa".into(),
        y_label: "detection_probability".into(),
        points,
        meta: meta(spec, &setup, start, extra),
    })
}

/// Normalised position error of estimate-then-localize; diverged or stalled
/// solves are excluded from the mean and counted in the metadata.
pub fn run_localization_curve(spec: &ExperimentSpec) -> Result<CurveResult> {
    let start = Instant::now();
    let setup = Setup::new(spec)?;
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (i, &snr) in spec.snr_db.iter().enumerate() {
        let e = energy(spec, &setup, snr);
        let out = collect(run_trials(0, spec.trials, |t| {
            let snap = draw(spec, &setup, Hypothesis::H1, e, TrialSeed::new(spec.seed, i as u64, t))?;
            let est = estimate(
                spec.estimator,
                &snap,
                &setup.scene,
                &setup.bank,
                e,
                &setup.grid,
                &spec.objective,
            )?;
            let loc = match localize(&est.tau_hat, &setup.scene, est.node, &spec.localization) {
                Ok(l) => l,
                Err(Error::RankDeficient { .. }) => return Ok(None),
                Err(err) => return Err(err),
            };
            Ok(loc
                .converged()
                .then(|| normalized_position_error(&loc.position, &setup.scene.target)))
        }))?;
        let ok: Vec<f64> = out.iter().flatten().copied().collect();
        failures.push(out.len() - ok.len());
        let (y, se) = mean_stderr(&ok);
        points.push(CurvePoint {
            x: snr,
            y,
            stderr: se,
            n_trials: ok.len(),
        });
    }
    let mut extra = BTreeMap::new();
    extra.insert("failed_solves".into(), serde_json::to_value(&failures).unwrap());
    Ok(CurveResult {
        name: spec.name.clone(),
        kind: ExperimentKind::Localization,
        x_label: "snr_db".into(),
        y_label: "normalized_position_mse".into(),
        points,
        meta: meta(spec, &setup, start, extra),
    })
}

pub fn run(spec: &ExperimentSpec) -> Result<CurveResult> {
    spec.validate()?;
    match spec.experiment {
        ExperimentKind::Mse => run_mse_curve(spec),
        ExperimentKind::Pmd => run_pmd_curve(spec),
        ExperimentKind::Roc => run_roc(spec),
        ExperimentKind::Localization => run_localization_curve(spec),
    }
}
