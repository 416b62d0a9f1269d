use mimo_radar::geometry::{is_feasible, project_feasible, true_delays, DelayVector, SceneConfig, SPEED_OF_LIGHT};
use mimo_radar::synth::TrialSeed;
use mimo_radar::{Error, Real};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const C: f64 = 299_792_458.0;

fn hand_dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[test]
fn speed_of_light_is_exact() {
    assert_eq!(SPEED_OF_LIGHT, C);
}

#[test]
fn symmetric_midpoint_delay() {
    let s = SceneConfig::new(vec![[1000.0, 0.0, 0.0]], vec![[-1000.0, 0.0, 0.0]], [0.0, 0.0, 0.0]).unwrap();
    let t = true_delays(&s);
    assert!((t.get(0, 0) - 2000.0 / C).abs() < 1e-18);
    assert!((t.get(0, 0) - 6.6713e-6).abs() < 1e-10);
    assert!((t.tx_part()[0] - 1000.0 / C).abs() < 1e-18);
    assert!((t.rx_part()[0] - 1000.0 / C).abs() < 1e-18);
}

#[test]
fn default_layout_first_pair() {
    let s = SceneConfig::<f64>::widely_separated(2, 2).unwrap();
    let t = true_delays(&s);
    let d1 = (19.0f64 * 19.0 + 15.0 * 15.0).sqrt();
    let d2 = (20.0f64 * 20.0 + 14.0 * 14.0).sqrt();
    assert!((d1 - 24.20744).abs() < 1e-5 && (d2 - 24.41311).abs() < 1e-5);
    let want = (d1 + d2) * 1000.0 / C;
    assert!((t.get(0, 0) - want).abs() <= 1e-15 * want);
    assert!((t.get(0, 0) - 1.62181e-4).abs() < 1e-9);
}

#[test]
fn delays_follow_legs() {
    let s = SceneConfig::<f64>::widely_separated(4, 8).unwrap();
    let t = true_delays(&s);
    for m in 0..4 {
        for n in 0..8 {
            let want = (hand_dist(s.target, s.tx[m]) + hand_dist(s.target, s.rx[n])) / C;
            assert!((t.get(m, n) - want).abs() <= 1e-15 * want);
            assert!((t.get(m, n) - t.tx_part()[m] - t.rx_part()[n]).abs() <= 1e-18);
        }
    }
}

#[test]
fn radial_motion_increases_delays() {
    let s = SceneConfig::<f64>::widely_separated(3, 3).unwrap();
    let near = true_delays(&s);
    let far = true_delays(&s.with_target(s.target.map(|v| v * 1.1)));
    for (a, b) in near.as_slice().iter().zip(far.as_slice()) {
        assert!(b > a);
    }
}

#[test]
fn physical_delays_are_feasible_at_zero_tolerance() {
    for (nt, nr) in [(1, 1), (2, 2), (4, 8)] {
        let s = SceneConfig::<f64>::widely_separated(nt, nr).unwrap();
        assert!(is_feasible(&true_delays(&s), &s, 0.0).unwrap());
    }
}

#[test]
fn perturbed_entry_is_infeasible() {
    let s = SceneConfig::<f64>::widely_separated(2, 3).unwrap();
    let t = true_delays(&s);
    let mut baseline = 0.0f64;
    for a in s.tx.iter().chain(&s.rx) {
        for b in s.tx.iter().chain(&s.rx) {
            baseline = baseline.max(hand_dist(*a, *b));
        }
    }
    let mut raw = t.as_slice().to_vec();
    raw[4] += 10.0 * baseline / C;
    let bad = DelayVector::from_raw(2, 3, raw).unwrap();
    assert!(!is_feasible(&bad, &s, 1e-12).unwrap());
}

#[test]
fn single_pair_is_always_feasible() {
    let s = SceneConfig::new(vec![[0.0, 0.0, 0.0]], vec![[5.0, 0.0, 0.0]], [1e4, 2e4, 0.0]).unwrap();
    for tau in [1e-9f64, 3e-5, 0.2] {
        let d = DelayVector::from_raw(1, 1, vec![tau]).unwrap();
        assert!(is_feasible(&d, &s, 0.0).unwrap());
        let p = project_feasible(&d, &s).unwrap();
        assert!((p.get(0, 0) - tau).abs() <= 1e-15 * tau);
    }
}

#[test]
fn dimension_mismatch_is_an_error() {
    let s = SceneConfig::<f64>::widely_separated(2, 2).unwrap();
    let t = true_delays(&SceneConfig::<f64>::widely_separated(2, 3).unwrap());
    assert!(matches!(is_feasible(&t, &s, 0.0), Err(Error::Dimension(_))));
    assert!(matches!(project_feasible(&t, &s), Err(Error::Dimension(_))));
}

#[test]
fn projection_rejects_non_positive_entries() {
    let s = SceneConfig::<f64>::widely_separated(2, 2).unwrap();
    let d = DelayVector::from_raw(2, 2, vec![1e-4, -1e-6, 1e-4, 1e-4]).unwrap();
    assert!(matches!(project_feasible(&d, &s), Err(Error::Delay(_))));
}

#[test]
fn projection_reproduces_separable_input() {
    let s = SceneConfig::<f64>::widely_separated(3, 4).unwrap();
    let t = true_delays(&s);
    let raw = DelayVector::from_raw(3, 4, t.as_slice().to_vec()).unwrap();
    let p = project_feasible(&raw, &s).unwrap();
    for (a, b) in p.as_slice().iter().zip(t.as_slice()) {
        assert!((a - b).abs() <= 1e-18);
    }
    // gauge: receiver part carries the column means
    for n in 0..4 {
        let col = (0..3).map(|m| t.get(m, n)).sum::<f64>() / 3.0;
        assert!((p.rx_part()[n] - col).abs() <= 1e-18);
    }
}

/// Dense least-squares fit of `tau[m][n] ~ t_m + t'_n` via SVD.
fn svd_fit(nt: usize, nr: usize, tau: &[f64]) -> Vec<f64> {
    let a = DMatrix::from_fn(nt * nr, nt + nr, |row, col| {
        let (m, n) = (row / nr, row % nr);
        if col == m || col == nt + n {
            1.0
        } else {
            0.0
        }
    });
    let b = DVector::from_column_slice(tau);
    let x = a.clone().svd(true, true).solve(&b, 1e-12).unwrap();
    (a * x).iter().copied().collect()
}

#[test]
fn projection_of_noisy_delays_matches_least_squares() {
    let s = SceneConfig::<f64>::widely_separated(2, 3).unwrap();
    let t = true_delays(&s);
    let sigma = 1e-8;
    let trials = 4000;
    let mut mean_resid = 0.0;
    for trial in 0..trials {
        let mut rng = TrialSeed::new(11, 0, trial).rng(mimo_radar::synth::Role::Noise);
        let raw: Vec<f64> = t
            .as_slice()
            .iter()
            .map(|v| v + sigma * f64::std_normal(&mut rng))
            .collect();
        let p = project_feasible(&DelayVector::from_raw(2, 3, raw.clone()).unwrap(), &s).unwrap();
        let oracle = svd_fit(2, 3, &raw);
        for (a, b) in p.as_slice().iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-16, "{a} vs {b}");
        }
        assert!(is_feasible(&p, &s, 1e-12).unwrap());
        mean_resid += raw.iter().zip(p.as_slice()).map(|(r, f)| (r - f).powi(2)).sum::<f64>();
    }
    mean_resid /= trials as f64;
    // (N_t - 1)(N_r - 1) residual degrees of freedom
    let expect = 2.0 * sigma * sigma;
    assert!((mean_resid / expect - 1.0).abs() < 0.1, "{}", mean_resid / expect);
    assert!(mean_resid <= 6.0 * sigma * sigma);
}

#[test]
fn projection_repairs_violations() {
    let s = SceneConfig::<f64>::widely_separated(2, 2).unwrap();
    let bad = DelayVector::from_parts(vec![0.0, 5e-5], vec![1e-4, 1e-4]);
    assert!(!is_feasible(&bad, &s, 1e-12).unwrap());
    let p = project_feasible(&bad, &s).unwrap();
    assert!(is_feasible(&p, &s, 1e-12).unwrap());
}

#[test]
fn invalid_scenes_are_rejected() {
    let o = [0.0, 0.0, 0.0];
    assert!(SceneConfig::<f64>::new(vec![], vec![o], [1.0, 0.0, 0.0]).is_err());
    assert!(SceneConfig::<f64>::new(vec![o], vec![[1.0, 0.0, 0.0]], o).is_err());
    assert!(SceneConfig::<f64>::new(vec![[f64::NAN, 0.0, 0.0]], vec![o], [1.0, 1.0, 0.0]).is_err());
    let mut s = SceneConfig::<f64>::widely_separated(1, 1).unwrap();
    s.speed = 0.0;
    assert!(s.validate().is_err());
    s.speed = C;
    s.path_loss_exp = 0.0;
    assert!(s.validate().is_ok());
    s.path_loss_exp = -1.0;
    assert!(s.validate().is_err());
}

#[test]
fn single_precision_scene() {
    let s = SceneConfig::<f32>::widely_separated(2, 2).unwrap();
    let t = true_delays(&s);
    assert!((t.get(0, 0) as f64 - 1.62181e-4).abs() < 1e-9);
    assert!(is_feasible(&t, &s, 1e-9).unwrap());
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-5e4f64..5e4)
}

fn scene() -> impl Strategy<Value = SceneConfig<f64>> {
    (
        prop::collection::vec(point(), 1..5),
        prop::collection::vec(point(), 1..5),
        point(),
    )
        .prop_filter_map("valid scene", |(tx, rx, target)| SceneConfig::new(tx, rx, target).ok())
}

fn rotate(p: [f64; 3], yaw: f64, pitch: f64) -> [f64; 3] {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let q = [cy * p[0] - sy * p[1], sy * p[0] + cy * p[1], p[2]];
    [cp * q[0] + sp * q[2], q[1], -sp * q[0] + cp * q[2]]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn random_scenes_are_feasible(s in scene()) {
        prop_assert!(is_feasible(&true_delays(&s), &s, 0.0).unwrap());
    }

    #[test]
    fn delays_are_rigid_invariant(s in scene(), shift in point(), yaw in 0.0f64..6.3, pitch in 0.0f64..6.3) {
        let f = |p: [f64; 3]| {
            let r = rotate(p, yaw, pitch);
            [r[0] + shift[0], r[1] + shift[1], r[2] + shift[2]]
        };
        let moved = SceneConfig::new(
            s.tx.iter().map(|p| f(*p)).collect(),
            s.rx.iter().map(|p| f(*p)).collect(),
            f(s.target),
        ).unwrap();
        let a = true_delays(&s);
        let b = true_delays(&moved);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-9));
        }
    }

    #[test]
    fn projection_is_idempotent(s in scene(), tx in prop::collection::vec(1e-6f64..1e-4, 4), rx in prop::collection::vec(1e-6f64..1e-4, 4)) {
        let d = DelayVector::from_parts(tx[..s.nt()].to_vec(), rx[..s.nr()].to_vec());
        let once = project_feasible(&d, &s).unwrap();
        let twice = project_feasible(&once, &s).unwrap();
        // rounding of the mean-removal scales with the largest entry
        let tol = 1e-15 * d.max();
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            prop_assert!((a - b).abs() <= tol);
        }
        if is_feasible(&d, &s, 0.0).unwrap() {
            for (a, b) in once.as_slice().iter().zip(d.as_slice()) {
                prop_assert!((a - b).abs() <= tol);
            }
        }
    }
}
