//! Orthogonal frequency-shifted pulses and their sampled, delayed replicas.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DelayVector;
use crate::scalar::{Real, C};

/// Sampled bank of `s_m(t) = T^{-1/2} exp(j 2 pi (m+1) t / T)` on `[0, T)`.
///
/// Sample `k` (0-based) is taken at `gate + k * sample_period`, so a replica
/// delayed by `tau` reads `s_m(gate + k * sample_period - tau)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveformBank<T> {
    count: usize,
    duration: T,
    samples_per_duration: usize,
    num_samples: usize,
    gate: T,
}

/// Worst-case departures from ideal orthogonality at a given set of delays.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OrthogonalityReport {
    /// `max |G[m][m']| * T_s` over receivers and `m != m'`.
    pub max_cross: f64,
    /// `min G[m][m] * T_s`; 1 when every replica lies fully inside the window.
    pub min_energy: f64,
}

impl<T: Real> WaveformBank<T> {
    pub fn new(count: usize, duration: T, samples_per_duration: usize, num_samples: usize, gate: T) -> Result<Self> {
        if count == 0 || samples_per_duration == 0 {
            return Err(Error::Bank(
                "waveform count and samples per duration must be positive".into(),
            ));
        }
        if !(duration.is_finite() && duration > T::zero()) || !gate.is_finite() {
            return Err(Error::Bank("duration must be positive and gate finite".into()));
        }
        Ok(WaveformBank {
            count,
            duration,
            samples_per_duration,
            num_samples,
            gate,
        })
    }

    /// Centres the sampling window on the interval of arrivals `[first, last + T)`.
    pub fn centred(
        count: usize,
        duration: T,
        samples_per_duration: usize,
        num_samples: usize,
        first: T,
        last: T,
    ) -> Result<Self> {
        let ts = duration / T::from_len(samples_per_duration);
        let half = T::of(0.5);
        let gate = (first + last + duration) * half - T::from_len(num_samples.saturating_sub(1)) * ts * half;
        Self::new(count, duration, samples_per_duration, num_samples, gate)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn duration(&self) -> T {
        self.duration
    }

    pub fn sample_period(&self) -> T {
        self.duration / T::from_len(self.samples_per_duration)
    }

    pub fn samples_per_duration(&self) -> usize {
        self.samples_per_duration
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn gate(&self) -> T {
        self.gate
    }

    #[inline]
    pub fn time(&self, k: usize) -> T {
        self.gate + T::from_len(k) * self.sample_period()
    }

    /// Tiny backward shift of the support so that on-grid delays never pick up
    /// an extra sample through rounding.
    #[inline]
    fn edge(&self) -> T {
        self.sample_period() * T::of(1e-6)
    }

    #[inline]
    fn in_support(&self, k: usize, tau: T) -> bool {
        let u = self.time(k) - tau;
        let e = self.edge();
        u >= -e && u < self.duration - e
    }

    /// `s_m[k; tau]`, zero outside the pulse support.
    pub fn sample(&self, m: usize, k: usize, tau: T) -> C<T> {
        assert!(m < self.count, "waveform index {m} out of range");
        if k >= self.num_samples || !self.in_support(k, tau) {
            return Complex::new(T::zero(), T::zero());
        }
        let u = self.time(k) - tau;
        T::cis_cycles(T::from_len(m + 1) * u / self.duration) / self.duration.sqrt()
    }

    /// `s_m[k; tau] exp(-j 2 pi f_c tau)`, the replica with its carrier phase.
    pub fn sample_with_carrier(&self, m: usize, k: usize, tau: T, carrier_hz: T) -> C<T> {
        self.sample(m, k, tau) * T::cis_cycles(-(carrier_hz * tau))
    }

    /// Half-open range of sample indices inside the support of a replica delayed by `tau`.
    pub fn support(&self, tau: T) -> (usize, usize) {
        let ts = self.sample_period();
        let k_len = self.num_samples;
        let guess = |t: T| -> usize {
            let x = ((t - self.gate) / ts).ceil();
            if !(x > T::zero()) {
                0
            } else {
                x.to_usize().unwrap_or(k_len).min(k_len)
            }
        };
        let mut lo = guess(tau);
        while lo > 0 && self.in_support(lo - 1, tau) {
            lo -= 1;
        }
        while lo < k_len && !self.in_support(lo, tau) && self.time(lo) < tau + self.duration {
            lo += 1;
        }
        let mut hi = guess(tau + self.duration).max(lo);
        while hi > lo && !self.in_support(hi - 1, tau) {
            hi -= 1;
        }
        while hi < k_len && self.in_support(hi, tau) {
            hi += 1;
        }
        if lo >= k_len || !self.in_support(lo, tau) {
            return (lo.min(k_len), lo.min(k_len));
        }
        (lo, hi)
    }

    /// `sum_k s_m[k; tau_a] conj(s_n[k; tau_b])`.
    pub fn gram_pair(&self, m: usize, tau_a: T, n: usize, tau_b: T) -> C<T> {
        (0..self.num_samples)
            .map(|k| self.sample(m, k, tau_a) * self.sample(n, k, tau_b).conj())
            .fold(Complex::new(T::zero(), T::zero()), |s, v| s + v)
    }

    /// Gram matrix `G[m][m'] = sum_k s_m[k; d_m] conj(s_m'[k; d_m'])`, row-major.
    pub fn gram(&self, delays: &[T]) -> Vec<C<T>> {
        let n = delays.len().min(self.count);
        let mut g = vec![Complex::new(T::zero(), T::zero()); n * n];
        for a in 0..n {
            for b in 0..n {
                g[a * n + b] = self.gram_pair(a, delays[a], b, delays[b]);
            }
        }
        g
    }

    /// Gram matrix seen by receiver `n`.
    pub fn gram_at(&self, tau: &DelayVector<T>, n: usize) -> Vec<C<T>> {
        let d: Vec<T> = (0..tau.nt()).map(|m| tau.get(m, n)).collect();
        self.gram(&d)
    }

    pub fn orthogonality(&self, tau: &DelayVector<T>) -> OrthogonalityReport {
        let ts = self.sample_period().to_f64v();
        let nt = tau.nt().min(self.count);
        let mut max_cross = 0.0f64;
        let mut min_energy = f64::INFINITY;
        for n in 0..tau.nr() {
            let g = self.gram_at(tau, n);
            for a in 0..nt {
                min_energy = min_energy.min(g[a * nt + a].re.to_f64v() * ts);
                for b in 0..nt {
                    if a != b {
                        max_cross = max_cross.max(g[a * nt + b].norm().to_f64v() * ts);
                    }
                }
            }
        }
        OrthogonalityReport { max_cross, min_energy }
    }

    /// True when every delay in `[first, last]` yields a full replica inside the window.
    pub fn covers(&self, first: T, last: T) -> bool {
        let (lo, hi) = self.support(first);
        let (lo2, hi2) = self.support(last);
        hi - lo == self.samples_per_duration && hi2 - lo2 == self.samples_per_duration
    }
}

/// Prefix sums of `r_n[k] exp(-j 2 pi (m+1) k T_s / T)` that make the matched
/// filter output for any delay an O(1) lookup.
#[derive(Clone, Debug)]
pub struct Correlator<T> {
    nt: usize,
    nr: usize,
    k_len: usize,
    // [(m * nr + n) * (k_len + 1) + k]
    prefix: Vec<C<T>>,
}

impl<T: Real> Correlator<T> {
    /// `samples` is K x N_r, sample-major.
    pub fn new(bank: &WaveformBank<T>, samples: &[C<T>], nr: usize) -> Self {
        let k_len = bank.num_samples();
        let nt = bank.count();
        assert_eq!(samples.len(), k_len * nr);
        let stride = k_len + 1;
        let mut prefix = vec![Complex::new(T::zero(), T::zero()); nt * nr * stride];
        let l = T::from_len(bank.samples_per_duration());
        for m in 0..nt {
            let f = T::from_len(m + 1) / l;
            for n in 0..nr {
                let base = (m * nr + n) * stride;
                for k in 0..k_len {
                    let rot = T::cis_cycles(-(f * T::from_len(k)));
                    prefix[base + k + 1] = prefix[base + k] + samples[k * nr + n] * rot;
                }
            }
        }
        Correlator { nt, nr, k_len, prefix }
    }

    /// `sum_k r_n[k] conj(s_m[k; tau])`.
    #[inline]
    pub fn correlate(&self, bank: &WaveformBank<T>, m: usize, n: usize, tau: T) -> C<T> {
        debug_assert!(m < self.nt && n < self.nr);
        let (lo, hi) = bank.support(tau);
        if hi <= lo {
            return Complex::new(T::zero(), T::zero());
        }
        let base = (m * self.nr + n) * (self.k_len + 1);
        let sum = self.prefix[base + hi] - self.prefix[base + lo];
        let cycles = T::from_len(m + 1) * (tau - bank.gate()) / bank.duration();
        sum * T::cis_cycles(cycles) / bank.duration().sqrt()
    }
}
