use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::{assemble, estimate_h_map, estimate_zeta, objective_at, Candidate, EstimatorKind, ObjectiveOptions};
use crate::error::{Error, Result};
use crate::geometry::{is_feasible, DelayVector, Point, SceneConfig};
use crate::scalar::{Real, C};
use crate::synth::SnapshotMatrix;
use crate::waveform::{Correlator, WaveformBank};

/// Candidate region and refinement settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec<T> {
    pub center: Point<T>,
    pub half_width: [T; 3],
    pub nodes: [usize; 3],
    pub refine: bool,
    /// Smallest refinement step as a fraction of the sample period.
    pub refine_floor: T,
    pub max_refine_evals: usize,
}

impl<T: Real> SearchSpec<T> {
    /// 41 x 41 planar grid, +-2 km around `center`.
    pub fn around(center: Point<T>) -> Self {
        SearchSpec {
            center,
            half_width: [T::of(2000.0), T::of(2000.0), T::zero()],
            nodes: [41, 41, 1],
            refine: true,
            refine_floor: T::of(0.01),
            max_refine_evals: 20_000,
        }
    }
}

/// Grid nodes with their delay-dependent factors precomputed.
#[derive(Clone, Debug)]
pub struct SearchGrid<T> {
    pub spec: SearchSpec<T>,
    pub points: Vec<Point<T>>,
    pub candidates: Vec<Candidate<T>>,
    /// Largest pair-delay change between neighbouring nodes.
    pub cell_delay: T,
}

impl<T: Real> SearchGrid<T> {
    pub fn new(scene: &SceneConfig<T>, spec: SearchSpec<T>) -> Result<Self> {
        if spec.nodes.contains(&0) {
            return Err(Error::Config("search grid needs at least one node per axis".into()));
        }
        let axis = |i: usize| -> Vec<T> {
            let n = spec.nodes[i];
            if n == 1 {
                return vec![spec.center[i]];
            }
            let lo = spec.center[i] - spec.half_width[i];
            let step = T::of(2.0) * spec.half_width[i] / T::from_len(n - 1);
            (0..n).map(|j| lo + step * T::from_len(j)).collect()
        };
        let (xs, ys, zs) = (axis(0), axis(1), axis(2));
        let mut points = Vec::with_capacity(xs.len() * ys.len() * zs.len());
        for &z in &zs {
            for &y in &ys {
                for &x in &xs {
                    points.push([x, y, z]);
                }
            }
        }
        let candidates: Vec<Candidate<T>> = points
            .iter()
            .map(|p| Candidate::new(scene, scene.delays_at(p)))
            .collect();
        let mut spacing = T::zero();
        for i in 0..3 {
            if spec.nodes[i] > 1 {
                spacing = spacing.max(T::of(2.0) * spec.half_width[i] / T::from_len(spec.nodes[i] - 1));
            }
        }
        let cell_delay = T::of(2.0) * spacing / scene.speed;
        Ok(SearchGrid {
            spec,
            points,
            candidates,
            cell_delay,
        })
    }

    /// Smallest and largest pair delay over all nodes.
    pub fn delay_span(&self) -> (T, T) {
        self.candidates
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), c| {
                (lo.min(c.tau.min()), hi.max(c.tau.max()))
            })
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SearchTrace {
    pub grid_evals: usize,
    pub refine_evals: usize,
    /// `(step, objective)` after each step-size level.
    pub levels: Vec<(f64, f64)>,
    /// Carrier period; point-target objectives oscillate on this scale.
    pub carrier_period: f64,
}

#[derive(Clone, Debug)]
pub struct EstimateResult<T> {
    pub tau_hat: DelayVector<T>,
    pub objective: T,
    /// Best grid node, a natural starting point for localization.
    pub node: Point<T>,
    pub node_index: usize,
    pub node_objective: T,
    pub h_hat: Option<Vec<C<T>>>,
    pub zeta_hat: Option<C<T>>,
    pub trace: SearchTrace,
}

struct Evaluator<'a, T: Real> {
    kind: EstimatorKind,
    bank: &'a WaveformBank<T>,
    corr: Correlator<T>,
    energy: T,
    opts: &'a ObjectiveOptions,
    nt: usize,
    nr: usize,
}

impl<T: Real> Evaluator<'_, T> {
    fn outputs(&self, tau: &DelayVector<T>) -> (Vec<C<T>>, Vec<C<T>>) {
        let zero = Complex::new(T::zero(), T::zero());
        let mut y = vec![zero; self.nt * self.nr];
        let mut common = vec![zero; self.nr];
        if self.kind.is_phased_array() {
            for (n, c) in common.iter_mut().enumerate() {
                *c = self.corr.correlate(self.bank, 0, n, tau.get(0, 0));
            }
        } else {
            for m in 0..self.nt {
                for n in 0..self.nr {
                    y[m * self.nr + n] = self.corr.correlate(self.bank, m, n, tau.get(m, n));
                }
            }
        }
        (y, common)
    }

    fn eval(&self, cand: &Candidate<T>) -> T {
        let (y, common) = self.outputs(&cand.tau);
        objective_at(
            self.kind,
            cand,
            &y,
            &common,
            self.energy,
            self.bank.sample_period(),
            self.opts,
        )
    }
}

/// Grid search over candidate locations followed by coordinate refinement of the
/// separable delay parameters. Ties keep the lowest node index.
pub fn estimate<T: Real>(
    kind: EstimatorKind,
    snap: &SnapshotMatrix<T>,
    scene: &SceneConfig<T>,
    bank: &WaveformBank<T>,
    energy: T,
    grid: &SearchGrid<T>,
    opts: &ObjectiveOptions,
) -> Result<EstimateResult<T>> {
    let (nt, nr) = (scene.nt(), scene.nr());
    if snap.nr != nr || snap.k != bank.num_samples() || bank.count() < nt {
        return Err(Error::Dimension("snapshot, scene and bank disagree".into()));
    }
    let ev = Evaluator {
        kind,
        bank,
        corr: Correlator::new(bank, &snap.data, nr),
        energy,
        opts,
        nt,
        nr,
    };

    let mut best: Option<(usize, T)> = None;
    for (i, cand) in grid.candidates.iter().enumerate() {
        let v = ev.eval(cand);
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    let (node_index, node_objective) = best.ok_or(Error::NoFeasibleCandidate)?;
    let mut trace = SearchTrace {
        grid_evals: grid.candidates.len(),
        carrier_period: (T::one() / scene.carrier_hz).to_f64v(),
        ..Default::default()
    };

    let start = &grid.candidates[node_index].tau;
    let mut tx = start.tx_part().to_vec();
    let mut rx = start.rx_part().to_vec();
    let (tx0, rx0) = (tx.clone(), rx.clone());
    let mut current = node_objective;

    if grid.spec.refine {
        let ts = bank.sample_period();
        let floor = ts * grid.spec.refine_floor;
        let tol = ts * T::of(1e-9);
        let mut step = grid.cell_delay.max(floor);
        let mut evals = 0usize;
        'levels: while step >= floor {
            let mut improved = true;
            while improved {
                improved = false;
                for i in 0..nt + nr {
                    for sign in [T::one(), -T::one()] {
                        if evals >= grid.spec.max_refine_evals {
                            break 'levels;
                        }
                        let (mut ttx, mut trx) = (tx.clone(), rx.clone());
                        // refinement stays within one cell of the grid winner
                        let moved = if i < nt {
                            ttx[i] = ttx[i] + sign * step;
                            ttx[i] - tx0[i]
                        } else {
                            trx[i - nt] = trx[i - nt] + sign * step;
                            trx[i - nt] - rx0[i - nt]
                        };
                        if moved.abs() > grid.cell_delay {
                            continue;
                        }
                        let tau = DelayVector::from_parts(ttx.clone(), trx.clone());
                        if !is_feasible(&tau, scene, tol)? {
                            continue;
                        }
                        evals += 1;
                        let v = ev.eval(&Candidate::new(scene, tau));
                        if v > current + T::of(1e-12) * current.abs() {
                            current = v;
                            tx = ttx;
                            rx = trx;
                            improved = true;
                            break;
                        }
                    }
                }
            }
            trace.levels.push((step.to_f64v(), current.to_f64v()));
            step = step * T::of(0.5);
        }
        trace.refine_evals = evals;
    }

    let tau_hat = DelayVector::from_parts(tx, rx);
    let (y, common) = ev.outputs(&tau_hat);
    let mf = assemble(scene, bank, tau_hat.clone(), energy, y, common);
    let (h_hat, zeta_hat) = match kind {
        EstimatorKind::MimoExtendedMap | EstimatorKind::MimoExtendedAve => {
            (Some(estimate_h_map(&mf, scene, bank)), None)
        }
        EstimatorKind::MimoPoint => (None, Some(estimate_zeta(&mf, scene, bank))),
        _ => (None, None),
    };
    Ok(EstimateResult {
        tau_hat,
        objective: current,
        node: grid.points[node_index],
        node_index,
        node_objective,
        h_hat,
        zeta_hat,
        trace,
    })
}
