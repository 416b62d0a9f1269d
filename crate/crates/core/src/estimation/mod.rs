//! Matched filtering, ML/MAP delay objectives and the two-stage delay search.

mod search;

pub use search::{estimate, EstimateResult, SearchGrid, SearchSpec, SearchTrace};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DelayVector, SceneConfig};
use crate::scalar::{Real, C};
use crate::synth::{path_gain, path_loss_sq, steering, SnapshotMatrix};
use crate::waveform::WaveformBank;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    MimoExtendedMap,
    MimoExtendedAve,
    MimoPoint,
    PaExtendedMap,
    PaExtendedAve,
    PaPoint,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::MimoExtendedMap,
        EstimatorKind::MimoExtendedAve,
        EstimatorKind::MimoPoint,
        EstimatorKind::PaExtendedMap,
        EstimatorKind::PaExtendedAve,
        EstimatorKind::PaPoint,
    ];

    pub fn is_phased_array(self) -> bool {
        matches!(self, Self::PaExtendedMap | Self::PaExtendedAve | Self::PaPoint)
    }

    pub fn is_point(self) -> bool {
        matches!(self, Self::MimoPoint | Self::PaPoint)
    }
}

/// Tuning knobs of the objectives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveOptions {
    /// Weight of the log-determinant penalty in the averaged phased-array objective.
    pub pa_ave_log_coeff: f64,
}

impl Default for ObjectiveOptions {
    fn default() -> Self {
        ObjectiveOptions { pa_ave_log_coeff: 1.0 }
    }
}

/// Delay-dependent factors of one candidate.
#[derive(Clone, Debug)]
pub struct Candidate<T> {
    pub tau: DelayVector<T>,
    /// `(c tau)^{-beta}` per pair.
    pub gain: Vec<T>,
    /// `(c tau)^{2 beta}` per pair.
    pub loss_sq: Vec<T>,
    /// Phased-array steering, extended and point variants.
    pub steer: Vec<C<T>>,
    pub steer_point: Vec<C<T>>,
    pub carrier: T,
}

impl<T: Real> Candidate<T> {
    pub fn new(scene: &SceneConfig<T>, tau: DelayVector<T>) -> Self {
        let gain = tau.as_slice().iter().map(|&t| path_gain(scene, t)).collect();
        let loss_sq = tau.as_slice().iter().map(|&t| path_loss_sq(scene, t)).collect();
        let steer = steering(scene, &tau, false);
        let steer_point = steering(scene, &tau, true);
        Candidate {
            tau,
            gain,
            loss_sq,
            steer,
            steer_point,
            carrier: scene.carrier_hz,
        }
    }
}

/// Correlator outputs at one candidate delay vector.
#[derive(Clone, Debug)]
pub struct MatchedFilterBank<T> {
    pub candidate: DelayVector<T>,
    pub energy: T,
    /// `sum_k r_n[k] conj(s_m[k; tau_mn])`, transmitter-major.
    pub y: Vec<C<T>>,
    /// `sqrt(E/N_t) (c tau)^{-beta} y`.
    pub a: Vec<C<T>>,
    /// `E/(T_s N_t) + (c tau)^{2 beta}`.
    pub l: Vec<T>,
    /// `sum_k r_n[k] conj(s_1[k; tau_11])` per receiver.
    pub common: Vec<C<T>>,
}

impl<T: Real> MatchedFilterBank<T> {
    /// `sum_k conj(r_n[k]) s_m[k; tau_mn]`.
    pub fn b(&self) -> Vec<C<T>> {
        self.y.iter().map(|v| v.conj()).collect()
    }
}

fn czero<T: Real>() -> C<T> {
    Complex::new(T::zero(), T::zero())
}

fn check_dims<T: Real>(
    snap: &SnapshotMatrix<T>,
    scene: &SceneConfig<T>,
    bank: &WaveformBank<T>,
    tau: &DelayVector<T>,
) -> Result<()> {
    if snap.nr != scene.nr() || snap.k != bank.num_samples() || tau.nt() != scene.nt() || tau.nr() != scene.nr() {
        return Err(Error::Dimension("snapshot, scene, bank and candidate disagree".into()));
    }
    if bank.count() < scene.nt() {
        return Err(Error::Dimension("bank smaller than the transmitter count".into()));
    }
    Ok(())
}

/// Conjugated replicas at fixed delays, for repeated filtering of many snapshots.
#[derive(Clone, Debug)]
pub struct Templates<T> {
    nt: usize,
    nr: usize,
    tau: DelayVector<T>,
    // (first sample, conj(s_m[k; tau_mn])) per pair, transmitter-major
    pairs: Vec<(usize, Vec<C<T>>)>,
    common: (usize, Vec<C<T>>),
}

impl<T: Real> Templates<T> {
    pub fn new(scene: &SceneConfig<T>, bank: &WaveformBank<T>, tau: &DelayVector<T>) -> Result<Self> {
        let (nt, nr) = (scene.nt(), scene.nr());
        if tau.nt() != nt || tau.nr() != nr || bank.count() < nt {
            return Err(Error::Dimension("scene, bank and candidate disagree".into()));
        }
        let taps = |m: usize, t: T| {
            let (lo, hi) = bank.support(t);
            (lo, (lo..hi).map(|k| bank.sample(m, k, t).conj()).collect())
        };
        let mut pairs = Vec::with_capacity(nt * nr);
        for m in 0..nt {
            for n in 0..nr {
                pairs.push(taps(m, tau.get(m, n)));
            }
        }
        Ok(Templates {
            nt,
            nr,
            tau: tau.clone(),
            pairs,
            common: taps(0, tau.get(0, 0)),
        })
    }

    /// `(y, common)` correlator outputs.
    pub fn apply(&self, snap: &SnapshotMatrix<T>) -> (Vec<C<T>>, Vec<C<T>>) {
        let dot = |n: usize, (lo, t): &(usize, Vec<C<T>>)| {
            t.iter()
                .enumerate()
                .fold(czero(), |s, (i, v)| s + snap.at(lo + i, n) * *v)
        };
        let mut y = Vec::with_capacity(self.nt * self.nr);
        for m in 0..self.nt {
            for n in 0..self.nr {
                y.push(dot(n, &self.pairs[m * self.nr + n]));
            }
        }
        let common = (0..self.nr).map(|n| dot(n, &self.common)).collect();
        (y, common)
    }

    pub fn filter(
        &self,
        snap: &SnapshotMatrix<T>,
        scene: &SceneConfig<T>,
        bank: &WaveformBank<T>,
        energy: T,
    ) -> MatchedFilterBank<T> {
        let (y, common) = self.apply(snap);
        assemble(scene, bank, self.tau.clone(), energy, y, common)
    }
}

/// Direct (sample-by-sample) matched filter.
pub fn matched_filter<T: Real>(
    snap: &SnapshotMatrix<T>,
    scene: &SceneConfig<T>,
    bank: &WaveformBank<T>,
    tau: &DelayVector<T>,
    energy: T,
) -> Result<MatchedFilterBank<T>> {
    check_dims(snap, scene, bank, tau)?;
    Ok(Templates::new(scene, bank, tau)?.filter(snap, scene, bank, energy))
}

pub(crate) fn assemble<T: Real>(
    scene: &SceneConfig<T>,
    bank: &WaveformBank<T>,
    tau: DelayVector<T>,
    energy: T,
    y: Vec<C<T>>,
    common: Vec<C<T>>,
) -> MatchedFilterBank<T> {
    let nt = T::from_len(scene.nt());
    let amp = (energy / nt).sqrt();
    let snr0 = energy / (bank.sample_period() * nt);
    let a = y
        .iter()
        .zip(tau.as_slice())
        .map(|(v, &t)| *v * (amp * path_gain(scene, t)))
        .collect();
    let l = tau.as_slice().iter().map(|&t| snr0 + path_loss_sq(scene, t)).collect();
    MatchedFilterBank {
        candidate: tau,
        energy,
        y,
        a,
        l,
        common,
    }
}

/// Log-likelihood style objective (larger is better).
pub fn objective<T: Real>(
    kind: EstimatorKind,
    mf: &MatchedFilterBank<T>,
    scene: &SceneConfig<T>,
    bank: &WaveformBank<T>,
    opts: &ObjectiveOptions,
) -> T {
    let cand = Candidate::new(scene, mf.candidate.clone());
    objective_at(kind, &cand, &mf.y, &mf.common, mf.energy, bank.sample_period(), opts)
}

/// Objective from precomputed candidate factors and correlator outputs.
pub fn objective_at<T: Real>(
    kind: EstimatorKind,
    cand: &Candidate<T>,
    y: &[C<T>],
    common: &[C<T>],
    energy: T,
    ts: T,
    opts: &ObjectiveOptions,
) -> T {
    let nt = T::from_len(cand.tau.nt());
    let inv_ts = T::one() / ts;
    // N_t / E, infinite at zero energy
    let nt_over_e = nt / energy;
    let snr0 = energy / (ts * nt);
    match kind {
        EstimatorKind::MimoExtendedMap | EstimatorKind::MimoExtendedAve => {
            let ave = kind == EstimatorKind::MimoExtendedAve;
            let mut acc = T::zero();
            for i in 0..y.len() {
                let den = inv_ts + nt_over_e * cand.loss_sq[i];
                let mut term = y[i].norm_sqr() / den;
                if ave {
                    term = term - (snr0 * cand.gain[i] * cand.gain[i]).ln_1p();
                }
                acc = acc + term;
            }
            acc
        }
        EstimatorKind::MimoPoint => {
            let mut num: C<T> = czero();
            let mut den = T::zero();
            for (i, &t) in cand.tau.as_slice().iter().enumerate() {
                let g = cand.gain[i];
                num = num + T::cis_cycles(cand.carrier * t) * y[i] * g;
                den = den + g * g;
            }
            num.norm_sqr() / den
        }
        EstimatorKind::PaExtendedMap | EstimatorKind::PaExtendedAve => {
            let (x, s2) = project(&cand.steer, common);
            let mut v = x / (inv_ts * s2 + nt_over_e);
            if kind == EstimatorKind::PaExtendedAve {
                v = v - T::of(opts.pa_ave_log_coeff) * (snr0 * s2).ln_1p();
            }
            v
        }
        EstimatorKind::PaPoint => {
            let (x, s2) = project(&cand.steer_point, common);
            x / (inv_ts * s2)
        }
    }
}

/// `(|sum_n conj(S_n) y_n|^2, sum_n |S_n|^2)`.
fn project<T: Real>(s: &[C<T>], y: &[C<T>]) -> (T, T) {
    let mut x = czero();
    let mut s2 = T::zero();
    for (a, b) in s.iter().zip(y) {
        x = x + a.conj() * *b;
        s2 = s2 + a.norm_sqr();
    }
    (x.norm_sqr(), s2)
}

/// Per-pair MAP gains `a / (A + 1)`.
pub fn estimate_h_map<T: Real>(mf: &MatchedFilterBank<T>, scene: &SceneConfig<T>, bank: &WaveformBank<T>) -> Vec<C<T>> {
    let snr0 = mf.energy / (bank.sample_period() * T::from_len(scene.nt()));
    mf.a.iter()
        .zip(mf.candidate.as_slice())
        .map(|(a, &t)| {
            let g = path_gain(scene, t);
            *a / (snr0 * g * g + T::one())
        })
        .collect()
}

/// Point-target reflectivity estimate.
pub fn estimate_zeta<T: Real>(mf: &MatchedFilterBank<T>, scene: &SceneConfig<T>, bank: &WaveformBank<T>) -> C<T> {
    let mut num: C<T> = czero();
    let mut den = T::zero();
    for (i, &t) in mf.candidate.as_slice().iter().enumerate() {
        let g = path_gain(scene, t);
        num = num + T::cis_cycles(scene.carrier_hz * t) * mf.y[i] * g;
        den = den + g * g;
    }
    let amp = (mf.energy / T::from_len(scene.nt())).sqrt();
    num / (den * amp / bank.sample_period())
}

/// `|sum_i exp(j alpha t_i) g_i|`.
pub fn phase_sum<T: Real>(alpha: T, t: &[T], g: &[C<T>]) -> T {
    t.iter()
        .zip(g)
        .fold(czero(), |s, (&ti, gi)| {
            s + Complex::from_polar(T::one(), alpha * ti) * *gi
        })
        .norm()
}

/// Times `t_2..t_N` (given `t_1`) that line every term up with the first one,
/// which makes `phase_sum` equal `sum_i |g_i|`.
pub fn align_phases<T: Real>(alpha: T, t1: T, g: &[C<T>]) -> Vec<T> {
    let target = alpha * t1 + g[0].arg();
    let mut out = vec![t1];
    out.extend(g[1..].iter().map(|gi| (target - gi.arg()) / alpha));
    out
}
