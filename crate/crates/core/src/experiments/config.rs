//! TOML experiment descriptions and their translation to runtime objects.

use serde::{Deserialize, Serialize};

use crate::detection::{DetectorKind, NullModel};
use crate::error::{Error, Result};
use crate::estimation::{EstimatorKind, ObjectiveOptions, SearchGrid, SearchSpec};
use crate::geometry::{true_delays, DelayVector, SceneConfig};
use crate::localization::LocalizeOptions;
use crate::synth::{ExtendedLaw, Model, PointLaw, SnrConvention};
use crate::waveform::WaveformBank;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Mse,
    Pmd,
    Roc,
    Localization,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    MimoExtended,
    MimoPoint,
    PhasedArray,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    #[default]
    Km,
    M,
}

impl Units {
    pub fn meters(self) -> f64 {
        match self {
            Units::Km => 1000.0,
            Units::M => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Transmitters on the x axis and receivers on the y axis, 1 km apart.
    #[default]
    WidelySeparated,
    /// Linear clusters around (1, 0, 0) km and (0, 1, 0) km, 1 m spacing unless overridden.
    Clustered,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub layout: Layout,
    #[serde(default)]
    pub nt: Option<usize>,
    #[serde(default)]
    pub nr: Option<usize>,
    #[serde(default)]
    pub units: Units,
    #[serde(default)]
    pub tx: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub rx: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub target: Option<[f64; 3]>,
    #[serde(default)]
    pub cluster_spacing: Option<f64>,
    #[serde(default)]
    pub carrier_hz: Option<f64>,
    #[serde(default)]
    pub path_loss_exp: Option<f64>,
    #[serde(default)]
    pub speed: Option<f64>,
    #[serde(default)]
    pub scatterers: Option<usize>,
}

impl SceneSpec {
    pub fn build(&self) -> Result<SceneConfig<f64>> {
        let u = self.units.meters();
        let scale = |v: &Vec<[f64; 3]>| v.iter().map(|p| p.map(|c| c * u)).collect::<Vec<_>>();
        let need = |v: Option<usize>, what: &str| v.ok_or_else(|| Error::Config(format!("scene.{what} is required")));
        let mut s = match self.layout {
            Layout::WidelySeparated => SceneConfig::widely_separated(need(self.nt, "nt")?, need(self.nr, "nr")?)?,
            Layout::Clustered => SceneConfig::clustered(
                need(self.nt, "nt")?,
                need(self.nr, "nr")?,
                self.cluster_spacing.map(|d| d * u),
            )?,
            Layout::Custom => {
                let tx = self
                    .tx
                    .as_ref()
                    .ok_or_else(|| Error::Config("scene.tx is required".into()))?;
                let rx = self
                    .rx
                    .as_ref()
                    .ok_or_else(|| Error::Config("scene.rx is required".into()))?;
                let target = self
                    .target
                    .ok_or_else(|| Error::Config("scene.target is required".into()))?;
                SceneConfig::new(scale(tx), scale(rx), target.map(|c| c * u))?
            }
        };
        if let Some(t) = self.target {
            s.target = t.map(|c| c * u);
        }
        if let Some(v) = self.carrier_hz {
            s.carrier_hz = v;
        }
        if let Some(v) = self.path_loss_exp {
            s.path_loss_exp = v;
        }
        if let Some(v) = self.speed {
            s.speed = v;
        }
        if let Some(v) = self.scatterers {
            s.scatterers = v;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankSpec {
    pub duration_s: f64,
    pub samples_per_duration: usize,
    pub num_samples: usize,
    /// First sample time; centred on the candidate delays when absent.
    #[serde(default)]
    pub gate_s: Option<f64>,
}

impl Default for BankSpec {
    fn default() -> Self {
        BankSpec {
            duration_s: 2.5e-5,
            samples_per_duration: 10,
            num_samples: 40,
            gate_s: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchFile {
    /// Grid centre in scene units; the target when absent.
    #[serde(default)]
    pub center: Option<[f64; 3]>,
    pub half_width: [f64; 3],
    pub nodes: [usize; 3],
    pub refine: bool,
    pub refine_floor: f64,
    pub max_refine_evals: usize,
}

impl Default for SearchFile {
    fn default() -> Self {
        let s = SearchSpec::<f64>::around([0.0; 3]);
        SearchFile {
            center: None,
            half_width: [2.0, 2.0, 0.0],
            nodes: s.nodes,
            refine: s.refine,
            refine_floor: s.refine_floor,
            max_refine_evals: s.max_refine_evals,
        }
    }
}

fn default_snr_db() -> Vec<f64> {
    (0..16).map(|i| -10.0 + 2.0 * i as f64).collect()
}

fn default_pfa() -> f64 {
    1e-2
}

fn default_roc_pfa() -> Vec<f64> {
    (0..=16).map(|i| 10f64.powf(-4.0 + 0.25 * i as f64)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub experiment: ExperimentKind,
    pub scenario: Scenario,
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub detector: Option<DetectorKind>,
    #[serde(default = "default_snr_db")]
    pub snr_db: Vec<f64>,
    #[serde(default)]
    pub snr_convention: SnrConvention,
    #[serde(default = "default_pfa")]
    pub pfa: f64,
    #[serde(default = "default_roc_pfa")]
    pub roc_pfa: Vec<f64>,
    #[serde(default)]
    pub roc_snr_db: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub genie_delays: bool,
    #[serde(default)]
    pub point_law: PointLaw,
    #[serde(default)]
    pub extended_law: ExtendedLaw,
    #[serde(default)]
    pub null_model: NullModel,
    #[serde(default)]
    pub objective: ObjectiveOptions,
    pub scene: SceneSpec,
    #[serde(default)]
    pub bank: BankSpec,
    #[serde(default)]
    pub search: SearchFile,
    #[serde(default)]
    pub localization: LocalizeOptions,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serialises")
    }

    /// Hash of the canonical JSON form.
    pub fn hash(&self) -> String {
        crate::io::sha256_hex(&serde_json::to_vec(self).expect("spec serialises"))
    }

    pub fn model(&self) -> Model {
        match self.estimator {
            EstimatorKind::MimoExtendedMap | EstimatorKind::MimoExtendedAve => Model::MimoExtended,
            EstimatorKind::MimoPoint => Model::MimoPoint,
            EstimatorKind::PaExtendedMap | EstimatorKind::PaExtendedAve => Model::PaExtended,
            EstimatorKind::PaPoint => Model::PaPoint,
        }
    }

    pub fn detector(&self) -> DetectorKind {
        self.detector
            .unwrap_or_else(|| DetectorKind::for_estimator(self.estimator))
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.scenario {
            Scenario::MimoExtended => {
                matches!(
                    self.estimator,
                    EstimatorKind::MimoExtendedMap | EstimatorKind::MimoExtendedAve
                )
            }
            Scenario::MimoPoint => self.estimator == EstimatorKind::MimoPoint,
            Scenario::PhasedArray => self.estimator.is_phased_array(),
        };
        if !ok {
            return Err(Error::Config(format!(
                "estimator {:?} does not fit scenario {:?}",
                self.estimator, self.scenario
            )));
        }
        if self.detector() != DetectorKind::for_estimator(self.estimator) {
            return Err(Error::KindMismatch(format!(
                "{:?} with {:?}",
                self.estimator,
                self.detector()
            )));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("snr_db must be a non-empty list of finite values".into()));
        }
        if !(self.pfa > 0.0 && self.pfa < 1.0) {
            return Err(Error::PfaOutOfRange(self.pfa));
        }
        if let Some(p) = self.roc_pfa.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(Error::PfaOutOfRange(*p));
        }
        if self.bank.samples_per_duration == 0 || self.bank.num_samples == 0 || !(self.bank.duration_s > 0.0) {
            return Err(Error::Config("bank sizes must be positive".into()));
        }
        self.scene.build()?;
        Ok(())
    }
}

/// Runtime objects shared by every trial of an experiment.
#[derive(Clone, Debug)]
pub struct Setup {
    pub scene: SceneConfig<f64>,
    pub bank: WaveformBank<f64>,
    pub grid: SearchGrid<f64>,
    pub truth: DelayVector<f64>,
    /// Whether every grid node yields full replicas inside the window.
    pub window_covers_grid: bool,
}

impl Setup {
    pub fn new(spec: &ExperimentSpec) -> Result<Self> {
        let scene = spec.scene.build()?;
        let truth = true_delays(&scene);
        let u = spec.scene.units.meters();
        let sf = &spec.search;
        let search = SearchSpec {
            center: sf.center.map(|c| c.map(|v| v * u)).unwrap_or(scene.target),
            half_width: sf.half_width.map(|v| v * u),
            nodes: sf.nodes,
            refine: sf.refine,
            refine_floor: sf.refine_floor,
            max_refine_evals: sf.max_refine_evals,
        };
        let grid = SearchGrid::new(&scene, search)?;
        let (glo, ghi) = grid.delay_span();
        let (lo, hi) = if spec.genie_delays {
            (truth.min(), truth.max())
        } else {
            (glo.min(truth.min()), ghi.max(truth.max()))
        };
        let b = &spec.bank;
        let bank = match b.gate_s {
            Some(g) => WaveformBank::new(scene.nt(), b.duration_s, b.samples_per_duration, b.num_samples, g)?,
            None => WaveformBank::centred(scene.nt(), b.duration_s, b.samples_per_duration, b.num_samples, lo, hi)?,
        };
        let window_covers_grid = bank.covers(glo, ghi);
        Ok(Setup {
            scene,
            bank,
            grid,
            truth,
            window_covers_grid,
        })
    }
}
