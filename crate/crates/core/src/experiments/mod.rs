//! Monte Carlo experiment driver (f64).

pub mod calibrate;
pub mod config;
pub mod diversity;
pub mod output;
pub mod runner;

pub use config::{ExperimentKind, ExperimentSpec, Scenario, Setup};
pub use diversity::{fit_diversity, fit_loglog, verify_lemma6, DiversityFit, SmallBall, SmallBallResult};
pub use output::{write_curve, OutputFormat};
pub use runner::{
    run, run_localization_curve, run_mse_curve, run_pmd_curve, run_roc, run_trials, CurvePoint, CurveResult,
};
