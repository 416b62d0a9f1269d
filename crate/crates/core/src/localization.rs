//! Gauss-Newton target localization from estimated bistatic delays.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, norm, sub, DelayVector, Point, SceneConfig};
use crate::scalar::Real;

fn check_clear<T: Real>(scene: &SceneConfig<T>, x: &Point<T>) -> Result<()> {
    if scene.tx.iter().chain(&scene.rx).any(|a| dist(a, x) == T::zero()) {
        return Err(Error::Scene("point coincides with an antenna".into()));
    }
    Ok(())
}

/// Bistatic delays `(|x - tx_m| + |x - rx_n|) / c`, transmitter-major.
pub fn bistatic_delays<T: Real>(scene: &SceneConfig<T>, x: &Point<T>) -> Result<Vec<T>> {
    check_clear(scene, x)?;
    Ok(scene.delays_at(x).as_slice().to_vec())
}

/// Rows `(u(x - tx_m) + u(x - rx_n)) / c`, with `u` the unit vector.
pub fn jacobian<T: Real>(scene: &SceneConfig<T>, x: &Point<T>) -> Result<Vec<[T; 3]>> {
    check_clear(scene, x)?;
    let unit = |a: &Point<T>| {
        let d = sub(x, a);
        let r = norm(&d);
        [d[0] / r, d[1] / r, d[2] / r]
    };
    let ut: Vec<[T; 3]> = scene.tx.iter().map(unit).collect();
    let ur: Vec<[T; 3]> = scene.rx.iter().map(unit).collect();
    let mut rows = Vec::with_capacity(ut.len() * ur.len());
    for a in &ut {
        for b in &ur {
            rows.push([0, 1, 2].map(|i| (a[i] + b[i]) / scene.speed));
        }
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizeOptions {
    pub max_iter: usize,
    /// Step size (meters) below which the iteration stops.
    pub tol: f64,
    /// Consecutive step-size increases that count as divergence.
    pub divergence_run: usize,
}

impl Default for LocalizeOptions {
    fn default() -> Self {
        LocalizeOptions {
            max_iter: 50,
            tol: 1e-3,
            divergence_run: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalizeStatus {
    Converged,
    MaxIterations,
    Diverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult<T> {
    pub position: Point<T>,
    pub iterations: usize,
    /// `|tau_hat - phi(position)|` in seconds.
    pub residual: T,
    pub status: LocalizeStatus,
    /// Coordinates that were solved for; a coordinate the delays are blind to
    /// (e.g. height in a planar layout) is held at its initial value.
    pub active: [bool; 3],
}

impl<T> LocalizationResult<T> {
    pub fn converged(&self) -> bool {
        self.status == LocalizeStatus::Converged
    }
}

/// Least squares `min |a x - b|` over the active columns by Householder QR.
pub fn lstsq<T: Real>(a: &[[T; 3]], b: &[T], active: [bool; 3]) -> Result<[T; 3]> {
    let cols: Vec<usize> = (0..3).filter(|&j| active[j]).collect();
    let (rows, p) = (a.len(), cols.len());
    if rows < p {
        return Err(Error::RankDeficient { rank: rows, cols: p });
    }
    // column-major working copy
    let mut m: Vec<Vec<T>> = cols.iter().map(|&j| a.iter().map(|r| r[j]).collect()).collect();
    let mut rhs = b.to_vec();
    let scale = m.iter().map(|c| norm_vec(c)).fold(T::zero(), T::max);
    for k in 0..p {
        let alpha = norm_vec(&m[k][k..]);
        if !(alpha > T::of(1e-10) * scale) {
            return Err(Error::RankDeficient { rank: k, cols: p });
        }
        let alpha = if m[k][k] > T::zero() { -alpha } else { alpha };
        let mut v: Vec<T> = m[k][k..].to_vec();
        v[0] = v[0] - alpha;
        let vn2: T = v.iter().map(|x| *x * *x).sum();
        if vn2 > T::zero() {
            for col in m.iter_mut().skip(k) {
                reflect(&v, vn2, &mut col[k..]);
            }
            reflect(&v, vn2, &mut rhs[k..]);
        }
    }
    let mut x = vec![T::zero(); p];
    for i in (0..p).rev() {
        let mut s = rhs[i];
        for j in i + 1..p {
            s = s - m[j][i] * x[j];
        }
        x[i] = s / m[i][i];
    }
    let mut out = [T::zero(); 3];
    for (i, &j) in cols.iter().enumerate() {
        out[j] = x[i];
    }
    Ok(out)
}

fn norm_vec<T: Real>(v: &[T]) -> T {
    v.iter().map(|x| *x * *x).sum::<T>().sqrt()
}

fn reflect<T: Real>(v: &[T], vn2: T, x: &mut [T]) {
    let d: T = v.iter().zip(x.iter()).map(|(a, b)| *a * *b).sum();
    let f = T::of(2.0) * d / vn2;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi = *xi - f * *vi;
    }
}

/// Linearize-and-solve iteration starting from `x0`.
pub fn localize<T: Real>(
    tau_hat: &DelayVector<T>,
    scene: &SceneConfig<T>,
    x0: Point<T>,
    opts: &LocalizeOptions,
) -> Result<LocalizationResult<T>> {
    if tau_hat.nt() != scene.nt() || tau_hat.nr() != scene.nr() {
        return Err(Error::Dimension("delay vector does not match the scene".into()));
    }
    let c = scene.speed;
    let mut x = x0;
    let h0 = jacobian(scene, &x)?;
    let colnorm = |j: usize| h0.iter().map(|r| r[j] * r[j]).sum::<T>().sqrt();
    let big = (0..3).map(colnorm).fold(T::zero(), T::max);
    let active = [0, 1, 2].map(|j| colnorm(j) > T::of(1e-9) * big);
    let mut last_step = T::infinity();
    let mut growth = 0;
    let mut status = LocalizeStatus::MaxIterations;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        let h: Vec<[T; 3]> = jacobian(scene, &x)?.iter().map(|r| r.map(|v| v * c)).collect();
        let resid: Vec<T> = bistatic_delays(scene, &x)?
            .iter()
            .zip(tau_hat.as_slice())
            .map(|(p, t)| (*t - *p) * c)
            .collect();
        let d = lstsq(&h, &resid, active)?;
        x = [x[0] + d[0], x[1] + d[1], x[2] + d[2]];
        let step = norm(&d);
        if !step.is_finite() || !x.iter().all(|v| v.is_finite()) {
            status = LocalizeStatus::Diverged;
            break;
        }
        if step <= T::of(opts.tol) {
            status = LocalizeStatus::Converged;
            break;
        }
        growth = if step > last_step { growth + 1 } else { 0 };
        if growth >= opts.divergence_run {
            status = LocalizeStatus::Diverged;
            break;
        }
        last_step = step;
    }
    let residual = match bistatic_delays(scene, &x) {
        Ok(p) if x.iter().all(|v| v.is_finite()) => p
            .iter()
            .zip(tau_hat.as_slice())
            .map(|(p, t)| (*t - *p) * (*t - *p))
            .sum::<T>()
            .sqrt(),
        _ => T::infinity(),
    };
    Ok(LocalizationResult {
        position: x,
        iterations,
        residual,
        status,
        active,
    })
}

/// `|x - truth|^2 / |truth|^2`.
pub fn normalized_position_error<T: Real>(x: &Point<T>, truth: &Point<T>) -> T {
    let d = dist(x, truth);
    d * d / (norm(truth) * norm(truth))
}
