use mimo_radar::experiments::calibrate::rate_convention_note;
use mimo_radar::experiments::output::curve_csv;
use mimo_radar::experiments::runner::{normalized_delay_error, run_trials, CurvePoint};
use mimo_radar::experiments::{
    fit_diversity, fit_loglog, run, verify_lemma6, write_curve, ExperimentKind, ExperimentSpec, OutputFormat, Setup,
    SmallBall,
};
use mimo_radar::geometry::DelayVector;
use mimo_radar::Error;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const BASE: &str = r#"
name = "probe"
experiment = "pmd"
scenario = "mimo_extended"
estimator = "mimo_extended_map"
snr_db = [0.0, 10.0]
trials = 200
seed = 7

[scene]
layout = "widely_separated"
nt = 2
nr = 2
"#;

fn spec(edit: impl FnOnce(&mut ExperimentSpec)) -> ExperimentSpec {
    let mut s = ExperimentSpec::from_toml(BASE).unwrap();
    edit(&mut s);
    s
}

#[test]
fn slope_of_exact_power_law() {
    let x: Vec<f64> = (1..=8).map(|i| 10f64.powf(i as f64 / 4.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powi(-2)).collect();
    let f = fit_loglog(&x, &y).unwrap();
    assert!((f.slope - 2.0).abs() < 1e-9);
    assert!((f.r_squared - 1.0).abs() < 1e-12);
    assert_eq!(f.n_points, 8);
}

#[test]
fn slope_under_multiplicative_noise() {
    let x: Vec<f64> = (0..16).map(|i| 10f64.powf(i as f64 / 5.0)).collect();
    // deterministic +-10% wiggle
    let y: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, v)| v.powi(-3) * if i % 2 == 0 { 1.1 } else { 0.9 })
        .collect();
    assert!((fit_loglog(&x, &y).unwrap().slope - 3.0).abs() <= 0.1);
}

#[test]
fn flat_curve_has_zero_slope() {
    let f = fit_loglog(&[1.0, 10.0, 100.0], &[0.2; 3]).unwrap();
    assert_eq!(f.slope, 0.0);
}

#[test]
fn slope_needs_three_points() {
    assert!(matches!(fit_loglog(&[1.0, 10.0], &[1.0, 0.1]), Err(Error::Config(_))));
    // nonpositive probabilities are dropped before counting
    assert!(fit_loglog(&[1.0, 10.0, 100.0], &[1.0, 0.1, 0.0]).is_err());
}

#[test]
fn diversity_fit_uses_db_axis_and_window() {
    let points: Vec<CurvePoint> = (0..16)
        .map(|i| {
            let db = 2.0 * i as f64;
            CurvePoint {
                x: db,
                y: (10f64.powf(db / 10.0)).powi(-2).min(1.0),
                stderr: 0.0,
                n_trials: 1,
            }
        })
        .collect();
    let f = fit_diversity(&points, 1e-3, 0.3).unwrap();
    assert!((f.slope - 2.0).abs() < 1e-9);
    assert!(points.iter().filter(|p| p.y >= 1e-3 && p.y <= 0.3).count() == f.n_points);
}

#[test]
fn small_ball_without_signal_is_chi_square() {
    for m in [1usize, 2, 4] {
        let mut cfg = SmallBall::standard(m, 100_000, 3);
        // negligible signal: the ball probability is the chi-square CDF at every point
        cfg.rho = vec![1e-6, 1e-5, 1e-4];
        let r = verify_lemma6(&cfg).unwrap();
        let want = ChiSquared::new(m as f64).unwrap().cdf(m as f64);
        let sd = (want * (1.0 - want) / 1e5).sqrt();
        for p in &r.probability {
            assert!((p - want).abs() <= 4.0 * sd, "m={m}: {p} vs {want}");
        }
        assert!(r.fit.slope.abs() < 0.05);
    }
}

#[test]
fn small_ball_rejects_empty_settings() {
    let mut cfg = SmallBall::standard(2, 10, 0);
    cfg.trials = 0;
    assert!(verify_lemma6(&cfg).is_err());
}

#[test]
fn small_ball_decay_order_one() {
    let r = verify_lemma6(&SmallBall::standard(1, 200_000, 9)).unwrap();
    assert!((r.fit.slope - 1.0).abs() < 0.15, "{}", r.fit.slope);
    assert!(r.probability.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(matches!(
        ExperimentSpec::from_toml(&BASE.replace("trials = 200", "trials = 0")),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        ExperimentSpec::from_toml(&format!("{BASE}\nbogus = 1\n")),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        ExperimentSpec::from_toml(&BASE.replace("estimator = \"mimo_extended_map\"", "estimator = \"pa_point\"")),
        Err(Error::Config(_))
    ));
    let t = BASE.replace("seed = 7", "seed = 7\ndetector = \"mimo_point\"");
    assert!(matches!(ExperimentSpec::from_toml(&t), Err(Error::KindMismatch(_))));
    assert!(matches!(
        ExperimentSpec::from_toml(&BASE.replace("seed = 7", "seed = 7\npfa = 1.0")),
        Err(Error::PfaOutOfRange(_))
    ));
    assert!(ExperimentSpec::from_toml(&BASE.replace("nt = 2\n", "")).is_err());
}

#[test]
fn toml_roundtrip_and_hash() {
    let a = spec(|_| ());
    let b = ExperimentSpec::from_toml(&a.to_toml()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
    assert_ne!(a.hash(), spec(|s| s.seed = 8).hash());
}

#[test]
fn partial_tables_fill_defaults() {
    let text = format!("{BASE}\n[bank]\nnum_samples = 60\n\n[search]\nnodes = [11, 11, 1]\n");
    let s = ExperimentSpec::from_toml(&text).unwrap();
    let base = spec(|_| ());
    assert_eq!(s.bank.num_samples, 60);
    assert_eq!(s.bank.duration_s, base.bank.duration_s);
    assert_eq!(s.search.nodes, [11, 11, 1]);
    assert_eq!(s.search.half_width, base.search.half_width);
    assert_eq!(s.search.refine, base.search.refine);
    assert!(ExperimentSpec::from_toml(&format!("{BASE}\n[search]\nnode = [3, 3, 1]\n")).is_err());
}

#[test]
fn units_scale_positions() {
    let km = spec(|s| {
        s.scene.target = Some([20.0, 15.0, 0.0]);
    });
    let m = spec(|s| {
        s.scene.units = mimo_radar::experiments::config::Units::M;
        s.scene.target = Some([20_000.0, 15_000.0, 0.0]);
    });
    let (a, b) = (Setup::new(&km).unwrap(), Setup::new(&m).unwrap());
    assert_eq!(a.scene.target, b.scene.target);
    assert_eq!(a.truth, b.truth);
}

#[test]
fn trial_blocks_concatenate() {
    let f = |t: u64| t * t + 1;
    let whole = run_trials(0, 10, f);
    let mut split = run_trials(0, 4, f);
    split.extend(run_trials(4, 6, f));
    assert_eq!(whole, split);
}

#[test]
fn delay_error_is_relative() {
    let truth = DelayVector::from_parts(vec![0.0, 0.0], vec![1e-4, 2e-4]);
    let est = DelayVector::from_parts(vec![0.0, 0.0], vec![1.1e-4, 2e-4]);
    // entries are tx + rx, so only the two paths through the first receiver are off, by 10%
    let want = (0.01 + 0.01) / 4.0;
    assert!((normalized_delay_error(&est, &truth) - want).abs() < 1e-12);
    assert_eq!(normalized_delay_error(&truth, &truth), 0.0);
}

#[test]
fn roc_is_monotone_and_reaches_one() {
    let s = spec(|s| {
        s.experiment = ExperimentKind::Roc;
        s.roc_pfa = vec![1e-3, 1e-2, 0.1, 0.5, 1.0];
        s.roc_snr_db = 5.0;
        s.trials = 300;
    });
    let c = run(&s).unwrap();
    assert_eq!(c.points.last().unwrap().y, 1.0);
    assert!(c.points.windows(2).all(|w| w[1].y >= w[0].y));
}

#[test]
fn miss_rate_at_vanishing_snr() {
    let s = spec(|s| {
        s.snr_db = vec![-60.0];
        s.genie_delays = true;
        s.trials = 20_000;
        s.pfa = 0.05;
    });
    let p = run(&s).unwrap().points[0];
    let sd = (0.05f64 * 0.95 / 20_000.0).sqrt();
    assert!((p.y - 0.95).abs() <= 4.0 * sd, "{}", p.y);
}

#[test]
fn error_curves_fall_with_snr() {
    let s = spec(|s| {
        s.experiment = ExperimentKind::Mse;
        s.snr_db = vec![-10.0, 30.0];
        s.trials = 100;
    });
    let c = run(&s).unwrap();
    assert!(c.points[1].y < c.points[0].y);
}

#[test]
fn localization_is_clean_at_high_snr() {
    let s = spec(|s| {
        s.experiment = ExperimentKind::Localization;
        s.snr_db = vec![30.0];
        s.trials = 50;
    });
    let c = run(&s).unwrap();
    assert_eq!(c.meta.extra["failed_solves"], serde_json::json!([0]));
    assert_eq!(c.points[0].n_trials, 50);
    // sub-sample delay errors are magnified by the 1 km apertures seen from 25 km
    assert!(c.points[0].y.is_finite() && c.points[0].y < 0.1, "{}", c.points[0].y);
}

#[test]
fn csv_output_is_reproducible() {
    let s = spec(|s| s.trials = 100);
    let a = curve_csv(&run(&s).unwrap()).unwrap();
    let b = curve_csv(&run(&s).unwrap()).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("x,y,stderr,n_trials\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn output_collision_and_force() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(|s| s.trials = 20);
    let c = run(&s).unwrap();
    let paths = write_curve(&c, dir.path(), OutputFormat::Csv, false).unwrap();
    assert_eq!(paths.len(), 2);
    assert!(paths.iter().all(|p| p.exists()));
    // same spec may overwrite
    write_curve(&c, dir.path(), OutputFormat::Csv, false).unwrap();
    let other = run(&spec(|s| {
        s.trials = 20;
        s.seed = 99;
    }))
    .unwrap();
    assert!(matches!(
        write_curve(&other, dir.path(), OutputFormat::Csv, false),
        Err(Error::OutputCollision(_))
    ));
    write_curve(&other, dir.path(), OutputFormat::Csv, true).unwrap();
    let body = std::fs::read_to_string(dir.path().join("probe.json")).unwrap();
    assert!(body.contains(&other.meta.spec_hash));
}

#[test]
fn json_output_holds_points() {
    let dir = tempfile::tempdir().unwrap();
    let c = run(&spec(|s| s.trials = 20)).unwrap();
    let paths = write_curve(&c, dir.path(), OutputFormat::Json, false).unwrap();
    assert_eq!(paths.len(), 1);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&paths[0]).unwrap()).unwrap();
    assert_eq!(v["points"].as_array().unwrap().len(), 2);
}

#[test]
fn rate_note_favours_the_used_convention() {
    let note = rate_convention_note(2.5e-6, 3.0e5, 0.01, 200_000, 1).unwrap();
    let line = note.lines().find(|l| l.contains("(used)")).unwrap();
    let ratio: f64 = line
        .rsplit("ratio ")
        .next()
        .unwrap()
        .trim_end_matches(')')
        .parse()
        .unwrap();
    assert!((ratio - 1.0).abs() < 0.02, "{note}");
}

#[test]
fn noiseless_localization_within_resolution_bound() {
    // delays resolve to one sample period; the geometry maps that through the smallest singular value
    let s = spec(|s| {
        s.experiment = ExperimentKind::Localization;
        s.snr_db = vec![200.0];
        s.trials = 20;
    });
    let setup = Setup::new(&s).unwrap();
    let j = mimo_radar::localization::jacobian(&setup.scene, &setup.scene.target).unwrap();
    let h = nalgebra::DMatrix::from_fn(j.len(), 2, |i, k| j[i][k]);
    let smin = h.singular_values().min();
    let bound = (j.len() as f64).sqrt() * setup.bank.sample_period() / smin;
    let r2 = setup.scene.target.iter().map(|v| v * v).sum::<f64>();
    let c = run(&s).unwrap();
    assert_eq!(c.meta.extra["failed_solves"], serde_json::json!([0]));
    assert!(
        c.points[0].y <= bound * bound / r2,
        "{} vs {}",
        c.points[0].y,
        bound * bound / r2
    );
}
