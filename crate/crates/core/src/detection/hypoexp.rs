//! Sum of independent exponentials with arbitrary (possibly repeated) rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Evaluation {
    /// Partial-fraction closed form; needs well separated rates.
    ClosedForm,
    /// Poisson-weighted series over the phase-type chain. All terms are
    /// nonnegative, so it is stable for equal or nearly equal rates.
    Uniformized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypoexponential<T> {
    rates: Vec<T>,
    weights: Option<Vec<T>>,
}

/// Closed form is used only when the partial-fraction weights stay below this.
const MAX_WEIGHT: f64 = 1e3;
/// Closed form is never used when two rates are relatively closer than this.
const MIN_GAP: f64 = 1e-6;

impl<T: Real> Hypoexponential<T> {
    pub fn new(rates: Vec<T>) -> Result<Self> {
        if rates.is_empty() || rates.iter().any(|r| !(r.is_finite() && *r > T::zero())) {
            return Err(Error::Config(
                "hypoexponential rates must be positive and finite".into(),
            ));
        }
        let weights = closed_form_weights(&rates);
        Ok(Hypoexponential { rates, weights })
    }

    pub fn rates(&self) -> &[T] {
        &self.rates
    }

    pub fn mean(&self) -> T {
        self.rates.iter().map(|r| T::one() / *r).sum()
    }

    pub fn evaluation(&self) -> Evaluation {
        if self.weights.is_some() {
            Evaluation::ClosedForm
        } else {
            Evaluation::Uniformized
        }
    }

    pub fn cdf(&self, x: T) -> T {
        self.cdf_with(x, self.evaluation())
    }

    /// Survival function `P(X > x)`.
    pub fn sf(&self, x: T) -> T {
        self.sf_with(x, self.evaluation())
    }

    pub fn cdf_with(&self, x: T, how: Evaluation) -> T {
        if !(x > T::zero()) {
            return T::zero();
        }
        match (how, &self.weights) {
            (Evaluation::ClosedForm, Some(w)) => {
                let s: T = w.iter().zip(&self.rates).map(|(w, r)| *w * (-*r * x).exp()).sum();
                (T::one() - s).max(T::zero()).min(T::one())
            }
            _ => self.uniformized(x).0,
        }
    }

    pub fn sf_with(&self, x: T, how: Evaluation) -> T {
        if !(x > T::zero()) {
            return T::one();
        }
        match (how, &self.weights) {
            (Evaluation::ClosedForm, Some(w)) => {
                let s: T = w.iter().zip(&self.rates).map(|(w, r)| *w * (-*r * x).exp()).sum();
                s.max(T::zero()).min(T::one())
            }
            _ => self.uniformized(x).1,
        }
    }

    /// `(cdf, sf)` via uniformization with rate `max(rates)`.
    fn uniformized(&self, x: T) -> (T, T) {
        let big = self.rates.iter().copied().fold(T::zero(), T::max);
        let lx = big * x;
        let n = self.rates.len();
        let step: Vec<T> = self.rates.iter().map(|r| *r / big).collect();
        let mut v = vec![T::zero(); n];
        v[0] = T::one();
        let mut absorbed = T::zero();
        let lxf = lx.to_f64v();
        let kmax = (lxf + 12.0 * lxf.sqrt() + 50.0).ceil() as usize;
        let ln_lx = lx.ln();
        let mut logp = -lx;
        let (mut cdf, mut sf) = (T::zero(), T::zero());
        for k in 0..=kmax {
            let p = logp.exp();
            if p > T::zero() {
                let alive: T = v.iter().copied().sum();
                cdf = cdf + p * absorbed;
                sf = sf + p * alive;
            }
            // one jump of the embedded chain
            absorbed = absorbed + v[n - 1] * step[n - 1];
            for i in (0..n).rev() {
                let out = v[i] * step[i];
                v[i] = v[i] - out;
                if i + 1 < n {
                    v[i + 1] = v[i + 1] + out;
                }
            }
            logp = logp + ln_lx - T::from_len(k + 1).ln();
        }
        // the smaller tail is accurate; the other is its complement
        if sf < cdf {
            let sf = sf.min(T::one());
            (T::one() - sf, sf)
        } else {
            let cdf = cdf.min(T::one());
            (cdf, T::one() - cdf)
        }
    }

    /// Inverse of the CDF, by bracketed bisection.
    pub fn quantile(&self, p: T) -> T {
        if p <= T::of(0.5) {
            self.invert(p, |x| self.cdf(x), true)
        } else {
            self.invert(T::one() - p, |x| self.sf(x), false)
        }
    }

    /// `x` with `P(X > x) = q`.
    pub fn upper_quantile(&self, q: T) -> T {
        if q <= T::of(0.5) {
            self.invert(q, |x| self.sf(x), false)
        } else {
            self.invert(T::one() - q, |x| self.cdf(x), true)
        }
    }

    fn invert(&self, target: T, f: impl Fn(T) -> T, increasing: bool) -> T {
        if target <= T::zero() {
            return if increasing { T::zero() } else { T::infinity() };
        }
        if target >= T::one() {
            return if increasing { T::infinity() } else { T::zero() };
        }
        let below = |x: T| if increasing { f(x) < target } else { f(x) > target };
        let mut lo = T::zero();
        let mut hi = self.mean();
        while below(hi) {
            lo = hi;
            hi = hi * T::of(2.0);
        }
        let tol = T::of(1e-13).max(T::epsilon() * T::of(4.0));
        for _ in 0..200 {
            let mid = (lo + hi) * T::of(0.5);
            if below(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= tol * hi {
                break;
            }
        }
        (lo + hi) * T::of(0.5)
    }
}

fn closed_form_weights<T: Real>(rates: &[T]) -> Option<Vec<T>> {
    let n = rates.len();
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let mut prod = T::one();
        for j in 0..n {
            if i == j {
                continue;
            }
            let gap = rates[j] - rates[i];
            if gap.abs() < T::of(MIN_GAP) * rates[i].max(rates[j]) {
                return None;
            }
            prod = prod * rates[j] / gap;
        }
        if !(prod.abs() <= T::of(MAX_WEIGHT)) {
            return None;
        }
        w.push(prod);
    }
    Some(w)
}
