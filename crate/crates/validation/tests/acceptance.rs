//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line; the process
//! exits nonzero when any criterion fails. Tolerances are fixed here.

use std::time::Instant;

use mimo_radar::detection::{null_law, DetectorKind, NullModel};
use mimo_radar::estimation::{
    align_phases, estimate, phase_sum, EstimatorKind, ObjectiveOptions, SearchGrid, SearchSpec,
};
use mimo_radar::experiments::calibrate::{calibrate_fixed, extended_weights, ks_distance, sample_null_sum};
use mimo_radar::experiments::runner::{CurvePoint, CurveResult};
use mimo_radar::experiments::{
    fit_diversity, run, verify_lemma6, write_curve, ExperimentSpec, OutputFormat, Setup, SmallBall,
};
use mimo_radar::geometry::{dist, true_delays, SceneConfig};
use mimo_radar::localization::{bistatic_delays, jacobian, localize, LocalizeOptions, LocalizeStatus};
use mimo_radar::synth::{
    energy_for_snr, signal_extended, signal_point, synth, synth_null, Role, SnrConvention, TrialSeed,
};
use mimo_radar::waveform::WaveformBank;
use mimo_radar::{Real, C};
use num_complex::Complex;

const SEED: u64 = 20240611;

struct Scenario<'a> {
    experiment: &'a str,
    scenario: &'a str,
    estimator: &'a str,
    layout: &'a str,
    nt: usize,
    nr: usize,
}

const MIMO_EXT: Scenario = Scenario {
    experiment: "pmd",
    scenario: "mimo_extended",
    estimator: "mimo_extended_map",
    layout: "widely_separated",
    nt: 2,
    nr: 2,
};

fn spec(s: &Scenario, body: &str) -> ExperimentSpec {
    let text = format!(
        "name = \"{}_{}_{}x{}\"\nexperiment = \"{}\"\nscenario = \"{}\"\nestimator = \"{}\"\nseed = {SEED}\n{body}\n\
         [scene]\nlayout = \"{}\"\nnt = {}\nnr = {}\n",
        s.experiment, s.estimator, s.nt, s.nr, s.experiment, s.scenario, s.estimator, s.layout, s.nt, s.nr
    );
    ExperimentSpec::from_toml(&text).unwrap_or_else(|e| panic!("bad acceptance spec: {e}\n{text}"))
}

fn with(base: &Scenario, f: impl FnOnce(&mut Scenario)) -> ExperimentSpec {
    let mut s = Scenario { ..*base };
    f(&mut s);
    spec(&s, "trials = 1")
}

fn curve(s: ExperimentSpec) -> CurveResult {
    run(&s).unwrap_or_else(|e| panic!("{}: {e}", s.name))
}

/// Pooled two-sigma allowance for comparing two curve points.
fn two_sigma(a: &CurvePoint, b: &CurvePoint) -> f64 {
    2.0 * (a.stderr * a.stderr + b.stderr * b.stderr).sqrt()
}

fn db_energy(setup: &Setup, db: f64) -> f64 {
    energy_for_snr(
        10f64.powf(db / 10.0),
        SnrConvention::Received,
        &setup.scene,
        &setup.bank,
        &setup.truth,
    )
}

fn criterion_1() -> (bool, String) {
    let pfa = 1e-2;
    let trials = 100_000;
    let cases = [
        (
            "mimo_extended",
            "mimo_extended_map",
            "widely_separated",
            2,
            2,
            DetectorKind::MimoExtended,
        ),
        (
            "mimo_extended",
            "mimo_extended_map",
            "widely_separated",
            4,
            8,
            DetectorKind::MimoExtended,
        ),
        (
            "mimo_point",
            "mimo_point",
            "widely_separated",
            2,
            2,
            DetectorKind::MimoPoint,
        ),
        (
            "phased_array",
            "pa_extended_map",
            "clustered",
            2,
            2,
            DetectorKind::PaExtended,
        ),
        ("phased_array", "pa_point", "clustered", 2, 2, DetectorKind::PaPoint),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (scenario, estimator, layout, nt, nr, kind) in cases {
        let sc = Scenario {
            experiment: "pmd",
            scenario,
            estimator,
            layout,
            nt,
            nr,
        };
        let setup = Setup::new(&spec(&sc, "trials = 1\ngenie_delays = true")).unwrap();
        let e = db_energy(&setup, 10.0);
        let c = calibrate_fixed(
            kind,
            &setup.scene,
            &setup.bank,
            e,
            pfa,
            trials,
            SEED,
            NullModel::ExactGram,
        )
        .unwrap();
        ok &= c.within(3.0);
        parts.push(format!("{kind:?} {nt}x{nr} {:.5} (z {:+.2})", c.empirical, c.z_score));
    }
    (
        ok,
        format!(
            "false-alarm rate at pfa 1e-2 over 1e5 trials within 3 sigma: {}",
            parts.join(", ")
        ),
    )
}

fn criterion_2() -> (bool, String) {
    let grid = "snr_db = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0, 22.0, 24.0, 26.0, 28.0, 30.0]\n\
                trials = 100000\npfa = 0.01\ngenie_delays = true";
    let cases = [
        (
            "MIMO extended 2x2",
            MIMO_EXT.estimator,
            MIMO_EXT.scenario,
            "widely_separated",
            "",
            3.2,
            4.8,
        ),
        (
            "MIMO point 2x2",
            "mimo_point",
            "mimo_point",
            "widely_separated",
            "point_law = \"rayleigh\"",
            0.7,
            1.3,
        ),
        (
            "phased array extended 2x2",
            "pa_extended_map",
            "phased_array",
            "clustered",
            "",
            0.7,
            1.3,
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, estimator, scenario, layout, extra, lo, hi) in cases {
        let sc = Scenario {
            experiment: "pmd",
            scenario,
            estimator,
            layout,
            nt: 2,
            nr: 2,
        };
        let c = curve(spec(&sc, &format!("{grid}\n{extra}")));
        match fit_diversity(&c.points, 1e-3, 0.3) {
            Ok(f) => {
                let pass = f.slope >= lo && f.slope <= hi;
                ok &= pass;
                parts.push(format!("{label} {:.3} in [{lo}, {hi}] ({} pts)", f.slope, f.n_points));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{label} no fit: {e}"));
            }
        }
    }
    (
        ok,
        format!("diversity slopes over P_md in [1e-3, 0.3]: {}", parts.join(", ")),
    )
}

fn criterion_3() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for (nt, nr) in [(2, 2), (4, 8)] {
        let setup = Setup::new(&with(&MIMO_EXT, |s| {
            s.nt = nt;
            s.nr = nr;
        }))
        .unwrap();
        let e = db_energy(&setup, 10.0);
        let l = extended_weights(&setup.scene, &setup.bank, &setup.truth, e);
        let law = null_law(
            DetectorKind::MimoExtended,
            &setup.truth,
            &setup.scene,
            &setup.bank,
            e,
            NullModel::Orthogonal,
        )
        .unwrap();
        let d = ks_distance(sample_null_sum(&l, setup.bank.sample_period(), 1_000_000, SEED), |x| {
            law.cdf(x)
        });
        ok &= d <= 0.005;
        parts.push(format!("{} terms KS {d:.5}", nt * nr));
    }
    (ok, format!("null CDF vs 1e6 draws, KS <= 0.005: {}", parts.join(", ")))
}

fn criterion_4() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [1usize, 2, 4] {
        let r = verify_lemma6(&SmallBall::standard(m, 4_000_000, SEED)).unwrap();
        let pass = (r.fit.slope - m as f64).abs() <= 0.15 * m as f64;
        ok &= pass;
        parts.push(format!("M={m} slope {:.3}", r.fit.slope));
    }
    (ok, format!("small-ball decay within 15% of M: {}", parts.join(", ")))
}

fn criterion_5() -> (bool, String) {
    let mut rng = TrialSeed::new(SEED, 5, 0).rng(Role::Channel);
    let alpha = 2.0 * std::f64::consts::PI * 5.0e6;
    let mut ok = true;
    let mut worst_gap = 0.0f64;
    let mut worst_ratio = 0.0f64;
    for n in [2usize, 5, 10] {
        let g: Vec<C<f64>> = (0..n).map(|_| f64::complex_normal(&mut rng, 1.0)).collect();
        let total: f64 = g.iter().map(|v| v.norm()).sum();
        let t = align_phases(alpha, 1.6e-4, &g);
        let gap = (phase_sum(alpha, &t, &g) - total).abs() / total;
        worst_gap = worst_gap.max(gap);
        ok &= gap <= 1e-12;
        for _ in 0..10_000 {
            let r: Vec<f64> = (0..n).map(|_| 1e-6 * f64::std_normal(&mut rng)).collect();
            let v = phase_sum(alpha, &r, &g);
            worst_ratio = worst_ratio.max(v / total);
            ok &= v <= total * (1.0 + 1e-12);
        }
    }
    (ok, format!("aligned sum equals sum |g| (worst rel gap {worst_gap:.1e}), 1e4 random draws below it (max ratio {worst_ratio:.6}) for N = 2, 5, 10"))
}

fn coarse_grid(scene: &SceneConfig<f64>, offset: [f64; 2], refine: bool) -> SearchGrid<f64> {
    let mut s = SearchSpec::around([scene.target[0] + offset[0], scene.target[1] + offset[1], 0.0]);
    s.nodes = [5, 5, 1];
    s.refine = refine;
    SearchGrid::new(scene, s).unwrap()
}

fn bank_for(scene: &SceneConfig<f64>, grid: &SearchGrid<f64>) -> WaveformBank<f64> {
    let (lo, hi) = grid.delay_span();
    let t = true_delays(scene);
    WaveformBank::centred(scene.nt(), 2.5e-5, 10, 40, lo.min(t.min()), hi.max(t.max())).unwrap()
}

fn criterion_6() -> (bool, String) {
    let opts = ObjectiveOptions::default();
    let one = Complex::new(1.0, 0.0);
    let mut exact = true;
    let mut worst_off = 0.0f64;
    let mut worst_ts = 0.0f64;
    for (nt, nr) in [(2, 2), (4, 8)] {
        let s = SceneConfig::<f64>::widely_separated(nt, nr).unwrap();
        let t = true_delays(&s);
        let on = coarse_grid(&s, [0.0, 0.0], false);
        let b = bank_for(&s, &on);
        let e = energy_for_snr(1.0, SnrConvention::Received, &s, &b, &t);
        let mut base = synth_null(&s, &b, TrialSeed::new(0, 0, 0)).unwrap();
        base.data = signal_extended(&s, &b, &t, e, &vec![one; nt * nr]).unwrap();
        let mut point = base.clone();
        point.data = signal_point(&s, &b, &t, e, one).unwrap();
        for (kind, snap) in [
            (EstimatorKind::MimoExtendedMap, &base),
            (EstimatorKind::MimoExtendedAve, &base),
            (EstimatorKind::MimoPoint, &point),
        ] {
            let r = estimate(kind, snap, &s, &b, e, &on, &opts).unwrap();
            exact &= r.tau_hat.as_slice() == t.as_slice();
        }
        let off = coarse_grid(&s, [430.0, -270.0], true);
        let b = bank_for(&s, &off);
        let mut snap = synth_null(&s, &b, TrialSeed::new(0, 0, 0)).unwrap();
        snap.data = signal_extended(&s, &b, &t, e, &vec![one; nt * nr]).unwrap();
        for kind in [EstimatorKind::MimoExtendedMap, EstimatorKind::MimoExtendedAve] {
            let r = estimate(kind, &snap, &s, &b, e, &off, &opts).unwrap();
            // refinement opens with a step of one cell delay and only halves it
            for (a, c) in r.tau_hat.as_slice().iter().zip(t.as_slice()) {
                worst_off = worst_off.max((a - c).abs() / off.cell_delay);
                worst_ts = worst_ts.max((a - c).abs() / b.sample_period());
            }
        }
    }
    let s = SceneConfig::<f64>::widely_separated(2, 2).unwrap();
    let t = true_delays(&s);
    let g = coarse_grid(&s, [0.0, 0.0], false);
    let b = bank_for(&s, &g);
    let e = energy_for_snr(1000.0, SnrConvention::Received, &s, &b, &t);
    let mut agree = 0;
    for i in 0..100 {
        let snap = synth(
            mimo_radar::synth::Model::MimoExtended,
            mimo_radar::synth::Hypothesis::H1,
            &s,
            &b,
            &t,
            e,
            Default::default(),
            Default::default(),
            TrialSeed::new(SEED, 6, i),
        )
        .unwrap();
        let a = estimate(EstimatorKind::MimoExtendedMap, &snap, &s, &b, e, &g, &opts).unwrap();
        let v = estimate(EstimatorKind::MimoExtendedAve, &snap, &s, &b, e, &g, &opts).unwrap();
        agree += usize::from(a.node_index == v.node_index);
    }
    let ok = exact && worst_off <= 1.0 && agree >= 95;
    (
        ok,
        format!(
            "on-grid recovery exact: {exact}; off-grid error {worst_off:.3} refinement steps (<= 1), {worst_ts:.3} sample periods; MAP/ave argmax agree at 30 dB on {agree}/100 (>= 95)"
        ),
    )
}

fn mse_at(sc: &Scenario, db: &str, trials: usize) -> CurveResult {
    curve(spec(sc, &format!("snr_db = [{db}]\ntrials = {trials}")))
}

fn criterion_7() -> (bool, String) {
    let trials = 2000;
    let map = Scenario {
        experiment: "mse",
        ..MIMO_EXT
    };
    let ave = Scenario {
        estimator: "mimo_extended_ave",
        ..map
    };
    let pa = Scenario {
        scenario: "phased_array",
        estimator: "pa_extended_map",
        layout: "clustered",
        ..map
    };
    let m = mse_at(&map, "-10.0, 20.0", trials);
    let a = mse_at(&ave, "-10.0, 20.0", trials);
    let p = mse_at(&pa, "-10.0", trials);
    let (m0, m1, a0, a1, p0) = (m.points[0], m.points[1], a.points[0], a.points[1], p.points[0]);
    let gap = m0.y <= p0.y / 2.0;
    let low = a0.y <= m0.y + two_sigma(&a0, &m0);
    let high = m1.y <= a1.y + two_sigma(&m1, &a1);
    (
        gap && low && high,
        format!(
            "-10 dB: MIMO {:.3e} +- {:.1e} vs PA {:.3e} +- {:.1e}, ratio {:.2} (needs >= 2): {}; ave {:.3e} +- {:.1e} <= MAP {:.3e} at -10 dB: {}; MAP {:.3e} +- {:.1e} <= ave {:.3e} +- {:.1e} at 20 dB: {}",
            m0.y, m0.stderr, p0.y, p0.stderr, p0.y / m0.y, gap, a0.y, a0.stderr, m0.y, low, m1.y, m1.stderr, a1.y, a1.stderr, high
        ),
    )
}

fn criterion_8() -> (bool, String) {
    let opts = LocalizeOptions::default();
    let mut converge = true;
    let mut max_iter = 0;
    let mut jac_err = 0.0f64;
    for (nt, nr) in [(2, 2), (4, 8)] {
        let s = SceneConfig::<f64>::widely_separated(nt, nr).unwrap();
        let t = true_delays(&s);
        for start in [[500.0, -300.0], [-2000.0, 2000.0], [1500.0, 1500.0]] {
            let x0 = [s.target[0] + start[0], s.target[1] + start[1], 0.0];
            let r = localize(&t, &s, x0, &opts).unwrap();
            converge &=
                r.status == LocalizeStatus::Converged && dist(&r.position, &s.target) <= 1e-3 && r.iterations <= 20;
            max_iter = max_iter.max(r.iterations);
        }
        let x = [s.target[0] + 123.0, s.target[1] - 77.0, 10.0];
        let j = jacobian(&s, &x).unwrap();
        let h = 1e-2;
        for axis in 0..3 {
            let (mut up, mut dn) = (x, x);
            up[axis] += h;
            dn[axis] -= h;
            let (pu, pd) = (bistatic_delays(&s, &up).unwrap(), bistatic_delays(&s, &dn).unwrap());
            for (i, row) in j.iter().enumerate() {
                let scale = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                jac_err = jac_err.max(((pu[i] - pd[i]) / (2.0 * h) - row[axis]).abs() / scale);
            }
        }
    }
    let grid = "-10.0, 0.0, 10.0, 20.0, 30.0";
    let loc = Scenario {
        experiment: "localization",
        ..MIMO_EXT
    };
    let small = mse_at(&loc, grid, 300);
    let large = mse_at(&Scenario { nt: 4, nr: 8, ..loc }, grid, 300);
    let mut better = true;
    let mut parts = Vec::new();
    for (a, b) in large.points.iter().zip(&small.points) {
        better &= a.y <= b.y + two_sigma(a, b);
        parts.push(format!("{} dB {:.2e}/{:.2e}", a.x, a.y, b.y));
    }
    let failed = format!(
        "{}/{}",
        large.meta.extra["failed_solves"], small.meta.extra["failed_solves"]
    );
    (
        converge && jac_err <= 1e-6 && better,
        format!(
            "noise-free convergence <= 1e-3 m in <= 20 iterations: {converge} (max {max_iter}); Jacobian rel error {jac_err:.1e} (<= 1e-6); 4x8/2x2 position MSE {} (failed solves {failed}): {better}",
            parts.join(", ")
        ),
    )
}

fn criterion_9() -> (bool, String) {
    let body = "trials = 20000\nroc_snr_db = 0.0\ngenie_delays = true";
    let mimo = Scenario {
        experiment: "roc",
        nt: 4,
        nr: 8,
        ..MIMO_EXT
    };
    let pa = Scenario {
        scenario: "phased_array",
        estimator: "pa_extended_map",
        layout: "clustered",
        ..mimo
    };
    let m = curve(spec(&mimo, body));
    let p = curve(spec(&pa, body));
    let monotone = [&m, &p]
        .iter()
        .all(|c| c.points.windows(2).all(|w| w[1].y + two_sigma(&w[0], &w[1]) >= w[0].y));
    let dominant = m
        .points
        .iter()
        .zip(&p.points)
        .all(|(a, b)| a.y + two_sigma(a, b) >= b.y);
    let losing: Vec<String> = m
        .points
        .iter()
        .zip(&p.points)
        .filter(|(a, b)| a.y + two_sigma(a, b) < b.y)
        .map(|(a, b)| format!("{:.0e}: {:.4}/{:.4}", a.x, a.y, b.y))
        .collect();
    (
        monotone && dominant,
        format!(
            "ROC at 0 dB on 4x8, nondecreasing: {monotone}; MIMO >= PA at every pfa: {dominant} ({} of {} pfa values behind{}{})",
            losing.len(),
            m.points.len(),
            if losing.is_empty() { "" } else { ", MIMO/PA at " },
            losing.join(", ")
        ),
    )
}

fn criterion_10() -> (bool, String) {
    let specs = [
        spec(&MIMO_EXT, "snr_db = [0.0, 10.0]\ntrials = 2000\ngenie_delays = true"),
        spec(
            &Scenario {
                experiment: "mse",
                ..MIMO_EXT
            },
            "snr_db = [0.0, 10.0]\ntrials = 200",
        ),
    ];
    let mut ok = true;
    for s in &specs {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        let bytes: Vec<Vec<u8>> = dirs
            .iter()
            .map(|d| {
                write_curve(&curve(s.clone()), d.path(), OutputFormat::Csv, false).unwrap();
                std::fs::read(d.path().join(format!("{}.csv", s.name))).unwrap()
            })
            .collect();
        ok &= !bytes[0].is_empty() && bytes[0] == bytes[1];
    }
    (
        ok,
        "two runs with equal seeds give byte-identical CSV files (genie P_md and estimated MSE)".into(),
    )
}

fn main() {
    let criteria: [(u32, fn() -> (bool, String)); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut failed = Vec::new();
    for (n, f) in criteria {
        let start = Instant::now();
        let (ok, msg) = f();
        println!(
            "{} criterion {n}: {msg} [{:.0} s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        if !ok {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
