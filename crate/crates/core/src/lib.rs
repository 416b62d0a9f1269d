//! Joint delay estimation, detection and localization for MIMO radar with widely
//! separated antennas, alongside a phased-array baseline.
//!
//! The numeric modules are generic over [`Real`] (`f32` or `f64`); the
//! experiment driver runs in `f64`.

pub mod detection;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod geometry;
pub mod io;
pub mod localization;
pub mod scalar;
pub mod synth;
pub mod waveform;

pub use error::{Error, Result};
pub use scalar::{Real, C};

pub type Scene = geometry::SceneConfig<f64>;
pub type SceneF32 = geometry::SceneConfig<f32>;
pub type Delays = geometry::DelayVector<f64>;
pub type DelaysF32 = geometry::DelayVector<f32>;
pub type Bank = waveform::WaveformBank<f64>;
pub type BankF32 = waveform::WaveformBank<f32>;
pub type Snapshot = synth::SnapshotMatrix<f64>;
pub type SnapshotF32 = synth::SnapshotMatrix<f32>;
pub type MatchedFilter = estimation::MatchedFilterBank<f64>;
pub type Search = estimation::SearchSpec<f64>;
pub type Grid = estimation::SearchGrid<f64>;
pub type Estimate = estimation::EstimateResult<f64>;
pub type Hypoexp = detection::Hypoexponential<f64>;
pub type Localization = localization::LocalizationResult<f64>;
