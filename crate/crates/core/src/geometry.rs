//! Antenna layout, bistatic delays and the feasible delay set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Cartesian point in meters.
pub type Point<T> = [T; 3];

pub fn sub<T: Real>(a: &Point<T>, b: &Point<T>) -> Point<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn norm<T: Real>(a: &Point<T>) -> T {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub fn dist<T: Real>(a: &Point<T>, b: &Point<T>) -> T {
    norm(&sub(a, b))
}

/// Antenna positions, target and propagation constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig<T> {
    pub tx: Vec<Point<T>>,
    pub rx: Vec<Point<T>>,
    pub target: Point<T>,
    pub carrier_hz: T,
    /// Path-loss exponent applied to each one-way leg product.
    pub path_loss_exp: T,
    pub speed: T,
    /// Number of scatterers when the extended target is built from point scatterers.
    pub scatterers: usize,
}

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

impl<T: Real> SceneConfig<T> {
    pub fn new(tx: Vec<Point<T>>, rx: Vec<Point<T>>, target: Point<T>) -> Result<Self> {
        let s = SceneConfig {
            tx,
            rx,
            target,
            carrier_hz: T::of(5.0e6),
            path_loss_exp: T::of(2.0),
            speed: T::of(SPEED_OF_LIGHT),
            scatterers: 10,
        };
        s.validate()?;
        Ok(s)
    }

    /// Transmitters at `(m, 0, 0)` km, receivers at `(0, n, 0)` km, target at `(20, 15, 0)` km.
    pub fn widely_separated(nt: usize, nr: usize) -> Result<Self> {
        let km = T::of(1000.0);
        let tx = (1..=nt).map(|m| [T::from_len(m) * km, T::zero(), T::zero()]).collect();
        let rx = (1..=nr).map(|n| [T::zero(), T::from_len(n) * km, T::zero()]).collect();
        Self::new(tx, rx, [T::of(20.0) * km, T::of(15.0) * km, T::zero()])
    }

    /// Uniform linear clusters centred on `(1, 0, 0)` km and `(0, 1, 0)` km,
    /// `spacing` meters apart (default 1 m).
    pub fn clustered(nt: usize, nr: usize, spacing: Option<T>) -> Result<Self> {
        let km = T::of(1000.0);
        let half = T::of(0.5);
        let d = spacing.unwrap_or(T::one());
        let off = |i: usize, n: usize| (T::from_len(i) - T::from_len(n - 1) * half) * d;
        let tx = (0..nt).map(|m| [km + off(m, nt), T::zero(), T::zero()]).collect();
        let rx = (0..nr).map(|n| [T::zero(), km + off(n, nr), T::zero()]).collect();
        Self::new(tx, rx, [T::of(20.0) * km, T::of(15.0) * km, T::zero()])
    }

    pub fn nt(&self) -> usize {
        self.tx.len()
    }

    pub fn nr(&self) -> usize {
        self.rx.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tx.is_empty() || self.rx.is_empty() {
            return Err(Error::Scene(
                "at least one transmitter and one receiver required".into(),
            ));
        }
        let finite = |p: &Point<T>| p.iter().all(|v| v.is_finite());
        if !self.tx.iter().chain(&self.rx).all(finite) || !finite(&self.target) {
            return Err(Error::Scene("non-finite coordinate".into()));
        }
        if self
            .tx
            .iter()
            .chain(&self.rx)
            .any(|p| dist(p, &self.target) == T::zero())
        {
            return Err(Error::Scene("target coincides with an antenna".into()));
        }
        let positive = |v: T| v.is_finite() && v > T::zero();
        if !positive(self.carrier_hz) || !positive(self.speed) {
            return Err(Error::Scene("carrier and speed must be positive".into()));
        }
        if !self.path_loss_exp.is_finite() || self.path_loss_exp < T::zero() {
            return Err(Error::Scene("path-loss exponent must be non-negative".into()));
        }
        Ok(())
    }

    /// Delays a scatterer at `p` would produce.
    pub fn delays_at(&self, p: &Point<T>) -> DelayVector<T> {
        let tx = self.tx.iter().map(|a| dist(p, a) / self.speed).collect();
        let rx = self.rx.iter().map(|a| dist(p, a) / self.speed).collect();
        DelayVector::from_parts(tx, rx)
    }

    pub fn with_target(&self, target: Point<T>) -> Self {
        SceneConfig { target, ..self.clone() }
    }

    pub fn wavelength(&self) -> T {
        self.speed / self.carrier_hz
    }

    /// Converts to another scalar type.
    pub fn cast<U: Real>(&self) -> SceneConfig<U> {
        let p = |a: &Point<T>| a.map(|v| U::of(v.to_f64v()));
        SceneConfig {
            tx: self.tx.iter().map(p).collect(),
            rx: self.rx.iter().map(p).collect(),
            target: p(&self.target),
            carrier_hz: U::of(self.carrier_hz.to_f64v()),
            path_loss_exp: U::of(self.path_loss_exp.to_f64v()),
            speed: U::of(self.speed.to_f64v()),
            scatterers: self.scatterers,
        }
    }
}

/// Delays of every transmitter/receiver pair, stored transmitter-major,
/// together with a separable decomposition `tau[m][n] = tx[m] + rx[n]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayVector<T> {
    nt: usize,
    nr: usize,
    tau: Vec<T>,
    tx: Vec<T>,
    rx: Vec<T>,
}

impl<T: Real> DelayVector<T> {
    pub fn from_parts(tx: Vec<T>, rx: Vec<T>) -> Self {
        let tau = tx.iter().flat_map(|&a| rx.iter().map(move |&b| a + b)).collect();
        DelayVector {
            nt: tx.len(),
            nr: rx.len(),
            tau,
            tx,
            rx,
        }
    }

    /// Wraps raw pair delays; the decomposition is the separable least-squares fit.
    pub fn from_raw(nt: usize, nr: usize, tau: Vec<T>) -> Result<Self> {
        if tau.len() != nt * nr || nt == 0 || nr == 0 {
            return Err(Error::Dimension(format!("{} delays for a {nt}x{nr} scene", tau.len())));
        }
        let (tx, rx) = separable_fit(nt, nr, &tau);
        Ok(DelayVector { nt, nr, tau, tx, rx })
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> T {
        self.tau[m * self.nr + n]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.tau
    }

    pub fn tx_part(&self) -> &[T] {
        &self.tx
    }

    pub fn rx_part(&self) -> &[T] {
        &self.rx
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn mean(&self) -> T {
        self.tau.iter().copied().sum::<T>() / T::from_len(self.tau.len())
    }

    pub fn min(&self) -> T {
        self.tau.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.tau.iter().copied().fold(T::neg_infinity(), T::max)
    }
}

/// Row/column means decomposition; gauge puts the grand mean in the receiver part.
fn separable_fit<T: Real>(nt: usize, nr: usize, tau: &[T]) -> (Vec<T>, Vec<T>) {
    let row: Vec<T> = (0..nt)
        .map(|m| tau[m * nr..(m + 1) * nr].iter().copied().sum::<T>() / T::from_len(nr))
        .collect();
    let col: Vec<T> = (0..nr)
        .map(|n| (0..nt).map(|m| tau[m * nr + n]).sum::<T>() / T::from_len(nt))
        .collect();
    let grand = row.iter().copied().sum::<T>() / T::from_len(nt);
    (row.into_iter().map(|r| r - grand).collect(), col)
}

pub fn true_delays<T: Real>(scene: &SceneConfig<T>) -> DelayVector<T> {
    scene.delays_at(&scene.target)
}

fn check_dims<T: Real>(tau: &DelayVector<T>, scene: &SceneConfig<T>) -> Result<()> {
    if tau.nt != scene.nt() || tau.nr != scene.nr() {
        return Err(Error::Dimension(format!(
            "{}x{} delays for a {}x{} scene",
            tau.nt,
            tau.nr,
            scene.nt(),
            scene.nr()
        )));
    }
    Ok(())
}

/// Pairwise triangle constraints: delays seen through two transmitters (or two
/// receivers) may differ by at most the antenna separation over `c`.
pub fn is_feasible<T: Real>(tau: &DelayVector<T>, scene: &SceneConfig<T>, tol: T) -> Result<bool> {
    check_dims(tau, scene)?;
    let (nt, nr) = (tau.nt, tau.nr);
    let c = scene.speed;
    if tau.tau.iter().any(|t| !t.is_finite() || *t <= T::zero()) {
        return Ok(false);
    }
    for m in 0..nt {
        for i in m + 1..nt {
            let limit = dist(&scene.tx[m], &scene.tx[i]) / c + tol;
            if (0..nr).any(|n| (tau.get(m, n) - tau.get(i, n)).abs() > limit) {
                return Ok(false);
            }
        }
    }
    for n in 0..nr {
        for j in n + 1..nr {
            let limit = dist(&scene.rx[n], &scene.rx[j]) / c + tol;
            if (0..nt).any(|m| (tau.get(m, n) - tau.get(m, j)).abs() > limit) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Separable least-squares fit, then each side's offsets are shrunk toward their
/// mean until the triangle constraints hold. Separable feasible inputs come back
/// unchanged up to rounding.
pub fn project_feasible<T: Real>(tau: &DelayVector<T>, scene: &SceneConfig<T>) -> Result<DelayVector<T>> {
    check_dims(tau, scene)?;
    if tau.tau.iter().any(|t| !t.is_finite() || *t <= T::zero()) {
        return Err(Error::Delay("entries must be positive and finite".into()));
    }
    let c = scene.speed;
    let (mut tx, mut rx) = separable_fit(tau.nt, tau.nr, &tau.tau);
    shrink_to_triangle(&mut tx, &scene.tx, c);
    shrink_to_triangle(&mut rx, &scene.rx, c);
    Ok(DelayVector::from_parts(tx, rx))
}

fn shrink_to_triangle<T: Real>(t: &mut [T], pos: &[Point<T>], c: T) {
    let mean = t.iter().copied().sum::<T>() / T::from_len(t.len());
    let mut alpha = T::one();
    for i in 0..t.len() {
        for j in i + 1..t.len() {
            let gap = (t[i] - t[j]).abs();
            let limit = dist(&pos[i], &pos[j]) / c;
            if gap > limit {
                alpha = alpha.min(limit / gap);
            }
        }
    }
    if alpha < T::one() {
        for v in t.iter_mut() {
            *v = mean + alpha * (*v - mean);
        }
    }
}
