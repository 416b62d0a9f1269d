//! `mimo-radar`: runs experiment specs and prints diagnostics.
//!
//! Exit status is 0 on success, 1 for configuration problems (unreadable or
//! invalid spec, output collision) and 2 for failures at run time, including
//! a `verify` suite that does not pass.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use mimo_radar::detection::{Evaluation, Hypoexponential};
use mimo_radar::estimation::{align_phases, estimate, phase_sum};
use mimo_radar::experiments::calibrate::{
    calibrate_fixed, extended_weights, ks_distance, rate_convention_note, sample_null_sum,
};
use mimo_radar::experiments::{run, verify_lemma6, write_curve, ExperimentSpec, OutputFormat, Setup, SmallBall};
use mimo_radar::geometry::dist;
use mimo_radar::io::write_atomic;
use mimo_radar::localization::{localize, normalized_position_error};
use mimo_radar::synth::{energy_for_snr, synth, Hypothesis, Role, TrialSeed};
use mimo_radar::{Error, Real, C};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "mimo-radar",
    version,
    about = "MIMO radar delay estimation, detection and localization experiments"
)]
struct Cli {
    /// Worker threads for Monte Carlo loops.
    #[arg(long, global = true, env = "MIMO_RADAR_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a spec and write its curve.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        /// Replace results written from a different spec.
        #[arg(long)]
        force: bool,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Print the scene, true delays, window and grid summary as JSON.
    SceneInfo {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Dump the waveform Gram matrices at the true delays as CSV.
    BankInfo {
        #[arg(long)]
        spec: PathBuf,
        /// Directory for `<name>_gram.csv`; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Empirical false-alarm rate of the spec's detector at the true delays.
    Calibrate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        /// SNR of the threshold weights; the first spec value when absent.
        #[arg(long, allow_hyphen_values = true)]
        snr_db: Option<f64>,
        /// Also compare the two rate conventions of the extended null.
        #[arg(long)]
        rate_note: bool,
    },
    /// Estimate delays from one synthetic snapshot and localize the target.
    Localize {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// The last spec value when absent.
        #[arg(long, allow_hyphen_values = true)]
        snr_db: Option<f64>,
    },
    /// Numeric checks of the supporting lemmas and of the null law.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        /// Dimension for the small-ball suite.
        #[arg(long = "M", default_value_t = 2)]
        m: usize,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Lemma3,
    Lemma6,
    Hypoexp,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::Scene(_)
            | Error::Bank(_)
            | Error::KindMismatch(_)
            | Error::PfaOutOfRange(_)
            | Error::OutputCollision(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn load(path: &Path) -> Result<ExperimentSpec, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read spec {}: {e}", path.display())))?;
    ExperimentSpec::from_toml(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

/// Writes data to standard output; a closed pipe is not an error.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn print_json(v: &serde_json::Value) {
    emit(&format!("{}\n", serde_json::to_string_pretty(v).expect("json value")));
}

fn energy(spec: &ExperimentSpec, setup: &Setup, snr_db: f64) -> f64 {
    energy_for_snr(
        10f64.powf(snr_db / 10.0),
        spec.snr_convention,
        &setup.scene,
        &setup.bank,
        &setup.truth,
    )
}

fn cmd_run(path: &Path, out: &Path, seed: Option<u64>, trials: Option<usize>, force: bool, format: Format) -> Outcome {
    let mut spec = load(path)?;
    let spec_seed = spec.seed;
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(t) = trials {
        spec.trials = t;
    }
    spec.validate()?;
    eprintln!(
        "running {} ({:?}): {} points x {} trials on {} threads",
        spec.name,
        spec.experiment,
        spec.snr_db.len(),
        spec.trials,
        rayon::current_num_threads()
    );
    let start = Instant::now();
    let mut curve = run(&spec)?;
    curve
        .meta
        .extra
        .insert("spec_path".into(), json!(path.display().to_string()));
    if seed.is_some() {
        curve
            .meta
            .extra
            .insert("seed_override".into(), json!({ "spec": spec_seed, "used": spec.seed }));
    }
    if trials.is_some() {
        curve.meta.extra.insert("trials_override".into(), json!(spec.trials));
    }
    let format = match format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    for p in write_curve(&curve, out, format, force)? {
        eprintln!("wrote {}", p.display());
    }
    eprintln!("done in {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_scene_info(path: &Path) -> Outcome {
    let spec = load(path)?;
    let setup = Setup::new(&spec)?;
    let (s, b) = (&setup.scene, &setup.bank);
    let orth = b.orthogonality(&setup.truth);
    print_json(&json!({
        "name": spec.name,
        "scene": s,
        "true_delays_s": setup.truth.as_slice(),
        "delay_spread_s": setup.truth.max() - setup.truth.min(),
        "bank": {
            "waveforms": b.count(),
            "duration_s": b.duration(),
            "sample_period_s": b.sample_period(),
            "num_samples": b.num_samples(),
            "gate_s": b.gate(),
            "max_cross": orth.max_cross,
            "min_energy": orth.min_energy,
        },
        "grid": {
            "nodes": setup.grid.points.len(),
            "cell_delay_s": setup.grid.cell_delay,
            "window_covers_grid": setup.window_covers_grid,
        },
    }));
    Ok(())
}

fn cmd_bank_info(path: &Path, out: Option<&Path>, force: bool) -> Outcome {
    let spec = load(path)?;
    let setup = Setup::new(&spec)?;
    let nt = setup.scene.nt();
    let mut text = String::from("receiver,row,col,re,im\n");
    for n in 0..setup.scene.nr() {
        let g = setup.bank.gram_at(&setup.truth, n);
        for i in 0..nt {
            for j in 0..nt {
                let v = g[i * nt + j];
                text.push_str(&format!("{n},{i},{j},{},{}\n", v.re, v.im));
            }
        }
    }
    match out {
        None => emit(&text),
        Some(dir) => {
            let file = dir.join(format!("{}_gram.csv", spec.name));
            if file.exists() && !force {
                return Err(Error::OutputCollision(file.display().to_string()).into());
            }
            write_atomic(&file, text.as_bytes())?;
            eprintln!("wrote {}", file.display());
        }
    }
    Ok(())
}

fn cmd_calibrate(
    path: &Path,
    seed: Option<u64>,
    trials: Option<usize>,
    snr_db: Option<f64>,
    rate_note: bool,
) -> Outcome {
    let spec = load(path)?;
    let setup = Setup::new(&spec)?;
    let snr = snr_db.unwrap_or(spec.snr_db[0]);
    let e = energy(&spec, &setup, snr);
    let seed = seed.unwrap_or(spec.seed);
    let trials = trials.unwrap_or(spec.trials);
    eprintln!(
        "calibrating {:?} at pfa {} over {trials} trials",
        spec.detector(),
        spec.pfa
    );
    let c = calibrate_fixed(
        spec.detector(),
        &setup.scene,
        &setup.bank,
        e,
        spec.pfa,
        trials,
        seed,
        spec.null_model,
    )?;
    print_json(&json!({ "snr_db": snr, "seed": seed, "within_3_sigma": c.within(3.0), "calibration": c }));
    if rate_note {
        let l = extended_weights(&setup.scene, &setup.bank, &setup.truth, e)[0];
        emit(&rate_convention_note(
            setup.bank.sample_period(),
            l,
            spec.pfa,
            trials.max(10_000),
            seed,
        )?);
    }
    Ok(())
}

fn cmd_localize(path: &Path, seed: Option<u64>, trial: u64, snr_db: Option<f64>) -> Outcome {
    let spec = load(path)?;
    let setup = Setup::new(&spec)?;
    if !setup.window_covers_grid {
        eprintln!("warning: the receive window does not cover every grid node; estimates near the edge are unreliable");
    }
    let snr = snr_db.unwrap_or(*spec.snr_db.last().expect("validated spec has snr values"));
    let e = energy(&spec, &setup, snr);
    let seed = TrialSeed::new(seed.unwrap_or(spec.seed), 0, trial);
    let (s, b) = (&setup.scene, &setup.bank);
    let snap = synth(
        spec.model(),
        Hypothesis::H1,
        s,
        b,
        &setup.truth,
        e,
        spec.extended_law,
        spec.point_law,
        seed,
    )?;
    let est = estimate(spec.estimator, &snap, s, b, e, &setup.grid, &spec.objective)?;
    let loc = localize(&est.tau_hat, s, est.node, &spec.localization)?;
    print_json(&json!({
        "snr_db": snr,
        "tau_hat_s": est.tau_hat.as_slice(),
        "true_delays_s": setup.truth.as_slice(),
        "grid_node": est.node,
        "localization": loc,
        "error_m": dist(&loc.position, &s.target),
        "normalized_error": normalized_position_error(&loc.position, &s.target),
    }));
    Ok(())
}

fn verdict(pass: bool) -> Outcome {
    if pass {
        emit("PASS\n");
        Ok(())
    } else {
        emit("FAIL\n");
        Err(Failure::Runtime("verification failed".into()))
    }
}

fn verify_lemma3(trials: usize, seed: u64) -> Outcome {
    let mut rng = TrialSeed::new(seed, 3, 0).rng(Role::Channel);
    let alpha = 2.0 * std::f64::consts::PI * 5.0e6;
    let mut pass = true;
    for n in [2usize, 5, 10] {
        let g: Vec<C<f64>> = (0..n).map(|_| f64::complex_normal(&mut rng, 1.0)).collect();
        let total: f64 = g.iter().map(|v| v.norm()).sum();
        let gap = (phase_sum(alpha, &align_phases(alpha, 1.6e-4, &g), &g) - total).abs() / total;
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let r: Vec<f64> = (0..n).map(|_| 1e-6 * f64::std_normal(&mut rng)).collect();
            worst = worst.max(phase_sum(alpha, &r, &g) / total);
        }
        let ok = gap <= 1e-12 && worst <= 1.0 + 1e-12;
        pass &= ok;
        emit(&format!(
            "N={n}: aligned gap {gap:.2e}, max random/aligned {worst:.6} over {trials} draws\n"
        ));
    }
    verdict(pass)
}

fn verify_small_ball(m: usize, trials: usize, seed: u64) -> Outcome {
    let r = verify_lemma6(&SmallBall::standard(m, trials, seed))?;
    for (rho, (p, h)) in r.rho.iter().zip(r.probability.iter().zip(&r.hits)) {
        emit(&format!("rho {rho:.4}: P {p:.4e} ({h} hits)\n"));
    }
    let tol = 0.15 * m as f64;
    emit(&format!(
        "M={m}: fitted slope {:.4} over {} points, tolerance {m} +- {tol:.2}\n",
        r.fit.slope, r.fit.n_points
    ));
    verdict((r.fit.slope - m as f64).abs() <= tol)
}

fn verify_hypoexp(trials: usize, seed: u64) -> Outcome {
    let ts = 2.5e-6;
    let cases: [&[f64]; 4] = [
        &[1.0],
        &[1.0, 2.0],
        &[1.0, 1.0 + 1e-9, 3.0],
        &[0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
    ];
    let mut pass = true;
    for weights in cases {
        let law = Hypoexponential::new(weights.iter().map(|l| ts * l).collect())?;
        let mean = law.mean();
        let mut gap = 0.0f64;
        if law.evaluation() == Evaluation::ClosedForm {
            for i in 1..200 {
                let x = mean * i as f64 / 40.0;
                gap =
                    gap.max((law.cdf_with(x, Evaluation::ClosedForm) - law.cdf_with(x, Evaluation::Uniformized)).abs());
            }
        }
        let ks = ks_distance(sample_null_sum(weights, ts, trials, seed), |x| law.cdf(x));
        let bound = 1.63 / (trials as f64).sqrt();
        let ok = gap <= 1e-9 && ks <= bound;
        pass &= ok;
        emit(&format!(
            "weights {weights:?}: closed/uniformized gap {gap:.1e}, KS {ks:.5} (<= {bound:.5})\n"
        ));
    }
    verdict(pass)
}

fn dispatch(cli: Cli) -> Outcome {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Run {
            spec,
            out,
            seed,
            trials,
            force,
            format,
        } => cmd_run(&spec, &out, seed, trials, force, format),
        Command::SceneInfo { spec } => cmd_scene_info(&spec),
        Command::BankInfo { spec, out, force } => cmd_bank_info(&spec, out.as_deref(), force),
        Command::Calibrate {
            spec,
            seed,
            trials,
            snr_db,
            rate_note,
        } => cmd_calibrate(&spec, seed, trials, snr_db, rate_note),
        Command::Localize {
            spec,
            seed,
            trial,
            snr_db,
        } => cmd_localize(&spec, seed, trial, snr_db),
        Command::Verify { suite, m, trials, seed } => match suite {
            Suite::Lemma3 => verify_lemma3(trials.unwrap_or(10_000), seed),
            Suite::Lemma6 => verify_small_ball(m, trials.unwrap_or(1_000_000), seed),
            Suite::Hypoexp => verify_hypoexp(trials.unwrap_or(100_000), seed),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
