//! Received snapshot synthesis for the MIMO and phased-array models.

use num_complex::Complex;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, DelayVector, Point, SceneConfig};
use crate::scalar::{Real, C};
use crate::waveform::WaveformBank;

/// How a linear SNR maps to transmit energy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SnrConvention {
    /// Per-path matched-filter SNR at the mean delay: `E (c tau)^{-2 beta} / (T_s N_t)`.
    #[default]
    Received,
    /// Energy over unit noise density, path loss not compensated.
    Transmit,
}

/// Path amplitude `(c tau)^{-beta}`, computed in the log domain.
#[inline]
pub fn path_gain<T: Real>(scene: &SceneConfig<T>, tau: T) -> T {
    (-(scene.path_loss_exp * (scene.speed * tau).ln())).exp()
}

/// `(c tau)^{2 beta}`.
#[inline]
pub fn path_loss_sq<T: Real>(scene: &SceneConfig<T>, tau: T) -> T {
    (T::of(2.0) * scene.path_loss_exp * (scene.speed * tau).ln()).exp()
}

pub fn energy_for_snr<T: Real>(
    snr: T,
    convention: SnrConvention,
    scene: &SceneConfig<T>,
    bank: &WaveformBank<T>,
    tau: &DelayVector<T>,
) -> T {
    match convention {
        SnrConvention::Transmit => snr,
        SnrConvention::Received => {
            snr * T::from_len(scene.nt()) * bank.sample_period() * path_loss_sq(scene, tau.mean())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PointLaw {
    /// `|zeta| = 1`, uniform phase.
    #[default]
    UnitRandomPhase,
    /// `zeta = 1`.
    Fixed,
    /// `zeta ~ CN(0, 1)`.
    Rayleigh,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExtendedLaw {
    /// Independent `h_mn ~ CN(0, 1)`.
    #[default]
    Direct,
    /// Sum over the scene's scatterers with `CN(0, 1/P)` reflectivities, spread
    /// uniformly over a cube of the given edge (meters) around the target.
    Scatterers { extent: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    H0,
    H1,
}

/// Seed material for one trial; every random role gets its own generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSeed {
    pub seed: u64,
    pub stream: u64,
    pub trial: u64,
}

#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub enum Role {
    Noise = 1,
    Channel = 2,
}

impl TrialSeed {
    pub fn new(seed: u64, stream: u64, trial: u64) -> Self {
        TrialSeed { seed, stream, trial }
    }

    pub fn rng(&self, role: Role) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        for (i, w) in [self.seed, self.stream, self.trial, role as u64].iter().enumerate() {
            key[i * 8..(i + 1) * 8].copy_from_slice(&w.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

/// One target return, kept for diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Channel<T> {
    /// Per-pair gains, transmitter-major.
    Extended(Vec<C<T>>),
    Point(C<T>),
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub scene_hash: String,
    pub snr: f64,
    pub energy: f64,
    pub seed: TrialSeed,
    pub hypothesis: Hypothesis,
    pub true_tau: Option<Vec<f64>>,
}

/// `K x N_r` received samples, sample-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotMatrix<T> {
    pub nr: usize,
    pub k: usize,
    pub data: Vec<C<T>>,
    pub channel: Channel<T>,
    pub meta: SnapshotMeta,
}

impl<T: Real> SnapshotMatrix<T> {
    #[inline]
    pub fn at(&self, k: usize, n: usize) -> C<T> {
        self.data[k * self.nr + n]
    }
}

fn zeros<T: Real>(len: usize) -> Vec<C<T>> {
    vec![Complex::new(T::zero(), T::zero()); len]
}

fn check<T: Real>(scene: &SceneConfig<T>, bank: &WaveformBank<T>, tau: &DelayVector<T>) -> Result<()> {
    if tau.nt() != scene.nt() || tau.nr() != scene.nr() {
        return Err(Error::Dimension("delay vector does not match the scene".into()));
    }
    if bank.count() < scene.nt() {
        return Err(Error::Dimension(format!(
            "bank holds {} waveforms for {} transmitters",
            bank.count(),
            scene.nt()
        )));
    }
    Ok(())
}

/// Noise-free extended-target return with per-pair gains `h` (transmitter-major).
pub fn signal_extended<T: Real>(
    scene: &SceneConfig<T>,
    bank: &WaveformBank<T>,
    tau: &DelayVector<T>,
    energy: T,
    h: &[C<T>],
) -> Result<Vec<C<T>>> {
    check(scene, bank, tau)?;
    let (nt, nr, kl) = (scene.nt(), scene.nr(), bank.num_samples());
    if h.len() != nt * nr {
        return Err(Error::Dimension("channel length".into()));
    }
    let amp = (energy / T::from_len(nt)).sqrt();
    let mut r = zeros(kl * nr);
    for m in 0..nt {
        for n in 0..nr {
            let t = tau.get(m, n);
            let g = h[m * nr + n] * (amp * path_gain(scene, t));
            let (lo, hi) = bank.support(t);
            for k in lo..hi {
                r[k * nr + n] = r[k * nr + n] + g * bank.sample(m, k, t);
            }
        }
    }
    Ok(r)
}

/// Noise-free point-target return with reflectivity `zeta`.
pub fn signal_point<T: Real>(
    scene: &SceneConfig<T>,
    bank: &WaveformBank<T>,
    tau: &DelayVector<T>,
    energy: T,
    zeta: C<T>,
) -> Result<Vec<C<T>>> {
    let h: Vec<C<T>> = tau
        .as_slice()
        .iter()
        .map(|&t| zeta * T::cis_cycles(-(scene.carrier_hz * t)))
        .collect();
    signal_extended(scene, bank, tau, energy, &h)
}

/// Noise-free phased-array return. Every transmitter sends the first waveform;
/// the envelope is taken at the reference delay `tau[0][0]`. The point-target
/// steering uses `tau11 - 2 tau_mn`.
pub fn signal_phased_array<T: Real>(
    scene: &SceneConfig<T>,
    bank: &WaveformBank<T>,
    tau: &DelayVector<T>,
    energy: T,
    gain: C<T>,
    point: bool,
) -> Result<Vec<C<T>>> {
    check(scene, bank, tau)?;
    let (nt, nr, kl) = (scene.nt(), scene.nr(), bank.num_samples());
    let amp = (energy / T::from_len(nt)).sqrt();
    let s = steering(scene, tau, point);
    let t11 = tau.get(0, 0);
    let (lo, hi) = bank.support(t11);
    let mut r = zeros(kl * nr);
    for k in lo..hi {
        let env = bank.sample(0, k, t11) * gain * amp;
        for n in 0..nr {
            r[k * nr + n] = env * s[n];
        }
    }
    Ok(r)
}

/// Array response per receiver: `sum_m (c tau_mn)^{-beta} exp(j 2 pi f_c (tau11 - q tau_mn))`
/// with `q = 1` (extended) or `q = 2` (point).
pub fn steering<T: Real>(scene: &SceneConfig<T>, tau: &DelayVector<T>, point: bool) -> Vec<C<T>> {
    let q = if point { T::of(2.0) } else { T::one() };
    let t11 = tau.get(0, 0);
    (0..tau.nr())
        .map(|n| {
            (0..tau.nt())
                .map(|m| {
                    let t = tau.get(m, n);
                    T::cis_cycles(scene.carrier_hz * (t11 - q * t)) * path_gain(scene, t)
                })
                .fold(Complex::new(T::zero(), T::zero()), |a, b| a + b)
        })
        .collect()
}

pub fn add_noise<T: Real, R: Rng + ?Sized>(r: &mut [C<T>], rng: &mut R) {
    for v in r.iter_mut() {
        *v = *v + T::complex_normal(rng, T::one());
    }
}

pub fn draw_zeta<T: Real, R: Rng + ?Sized>(law: PointLaw, rng: &mut R) -> C<T> {
    match law {
        PointLaw::Fixed => Complex::new(T::one(), T::zero()),
        PointLaw::UnitRandomPhase => T::cis_cycles(T::of(rng.random::<f64>())),
        PointLaw::Rayleigh => T::complex_normal(rng, T::one()),
    }
}

/// Per-pair gains for the extended target.
pub fn draw_extended<T: Real, R: Rng + ?Sized>(scene: &SceneConfig<T>, law: ExtendedLaw, rng: &mut R) -> Vec<C<T>> {
    let (nt, nr) = (scene.nt(), scene.nr());
    match law {
        ExtendedLaw::Direct => (0..nt * nr).map(|_| T::complex_normal(rng, T::one())).collect(),
        ExtendedLaw::Scatterers { extent } => {
            let p = scene.scatterers.max(1);
            let var = T::one() / T::from_len(p);
            let mut h = zeros(nt * nr);
            for _ in 0..p {
                let zeta = T::complex_normal(rng, var);
                let mut off = [T::zero(); 3];
                for o in off.iter_mut() {
                    *o = T::of((rng.random::<f64>() - 0.5) * extent);
                }
                let pos: Point<T> = [
                    scene.target[0] + off[0],
                    scene.target[1] + off[1],
                    scene.target[2] + off[2],
                ];
                for m in 0..nt {
                    for n in 0..nr {
                        let t = (dist(&pos, &scene.tx[m]) + dist(&pos, &scene.rx[n])) / scene.speed;
                        h[m * nr + n] = h[m * nr + n] + zeta * T::cis_cycles(-(scene.carrier_hz * t));
                    }
                }
            }
            h
        }
    }
}

/// Which signal model a snapshot follows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    MimoExtended,
    MimoPoint,
    PaExtended,
    PaPoint,
}

/// Draws one snapshot. Under `H0` only noise is returned.
#[allow(clippy::too_many_arguments)]
pub fn synth<T: Real>(
    model: Model,
    hypothesis: Hypothesis,
    scene: &SceneConfig<T>,
    bank: &WaveformBank<T>,
    tau: &DelayVector<T>,
    energy: T,
    extended_law: ExtendedLaw,
    point_law: PointLaw,
    seed: TrialSeed,
) -> Result<SnapshotMatrix<T>> {
    check(scene, bank, tau)?;
    let tol = (tau.max() * T::epsilon() * T::of(8.0)).max(T::of(1e-12));
    if !crate::geometry::is_feasible(tau, scene, tol)? {
        return Err(Error::Delay("delay vector is not feasible for the scene".into()));
    }
    if !(energy >= T::zero()) || !energy.is_finite() {
        return Err(Error::Config(format!("energy must be non-negative, got {energy}")));
    }
    let (nr, kl) = (scene.nr(), bank.num_samples());
    let mut ch_rng = seed.rng(Role::Channel);
    let (mut data, channel) = match hypothesis {
        Hypothesis::H0 => (zeros(kl * nr), Channel::None),
        Hypothesis::H1 => match model {
            Model::MimoExtended => {
                let h = draw_extended(scene, extended_law, &mut ch_rng);
                (signal_extended(scene, bank, tau, energy, &h)?, Channel::Extended(h))
            }
            Model::MimoPoint => {
                let z = draw_zeta(point_law, &mut ch_rng);
                (signal_point(scene, bank, tau, energy, z)?, Channel::Point(z))
            }
            Model::PaExtended => {
                let h = T::complex_normal(&mut ch_rng, T::one());
                (
                    signal_phased_array(scene, bank, tau, energy, h, false)?,
                    Channel::Point(h),
                )
            }
            Model::PaPoint => {
                let z = draw_zeta(point_law, &mut ch_rng);
                (
                    signal_phased_array(scene, bank, tau, energy, z, true)?,
                    Channel::Point(z),
                )
            }
        },
    };
    add_noise(&mut data, &mut seed.rng(Role::Noise));
    let snr = match hypothesis {
        Hypothesis::H0 => 0.0,
        Hypothesis::H1 => {
            let e = energy.to_f64v();
            e / energy_for_snr(T::one(), SnrConvention::Received, scene, bank, tau).to_f64v()
        }
    };
    Ok(SnapshotMatrix {
        nr,
        k: kl,
        data,
        channel,
        meta: SnapshotMeta {
            scene_hash: crate::io::scene_hash(scene),
            snr,
            energy: energy.to_f64v(),
            seed,
            hypothesis,
            true_tau: Some(tau.as_slice().iter().map(|v| v.to_f64v()).collect()),
        },
    })
}

/// Noise-only snapshot.
pub fn synth_null<T: Real>(
    scene: &SceneConfig<T>,
    bank: &WaveformBank<T>,
    seed: TrialSeed,
) -> Result<SnapshotMatrix<T>> {
    let tau = crate::geometry::true_delays(scene);
    let mut s = synth(
        Model::MimoExtended,
        Hypothesis::H0,
        scene,
        bank,
        &tau,
        T::zero(),
        ExtendedLaw::Direct,
        PointLaw::Fixed,
        seed,
    )?;
    s.meta.true_tau = None;
    Ok(s)
}
