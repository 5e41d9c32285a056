use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vl_intent::jumps::JumpPrior;
use vl_intent::models::{ModelKind, ModelParams};
use vl_intent::scenario::{FilterTuning, Method, ScenarioConfig};

use crate::CliError;

/// Model parameters without the axis count, which comes from the data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSection {
    pub eta: f64,
    pub rho: f64,
    pub sigma_x: f64,
    pub sigma_r: f64,
    pub mu_j: f64,
    pub sigma_j: f64,
}

impl Default for ParamsSection {
    fn default() -> Self {
        let t = FilterTuning::default();
        Self {
            eta: t.eta,
            rho: t.rho,
            sigma_x: t.sigma_x,
            sigma_r: t.baseline_sigma_r,
            mu_j: t.piecewise.mu_j,
            sigma_j: t.piecewise.sigma_j,
        }
    }
}

impl ParamsSection {
    pub fn with_dims(&self, dims: usize) -> ModelParams {
        ModelParams {
            eta: self.eta,
            rho: self.rho,
            sigma_x: self.sigma_x,
            sigma_r: self.sigma_r,
            mu_j: self.mu_j,
            sigma_j: self.sigma_j,
            dims,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub particles: usize,
    pub ess_threshold: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            particles: 500,
            ess_threshold: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationSection {
    /// Per-axis measurement noise standard deviation (m).
    pub sigma: f64,
}

impl Default for ObservationSection {
    fn default() -> Self {
        Self { sigma: 15.0 }
    }
}

/// Initial belief: centred on the first measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub position_var: f64,
    pub velocity_var: f64,
    pub intent_var: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        let t = FilterTuning::default();
        Self {
            position_var: t.position_var,
            velocity_var: t.velocity_var,
            intent_var: t.intent_var,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub realisations: Option<usize>,
    pub methods: Option<Vec<Method>>,
    /// Defaults to the tuning matched to the scenario's generator.
    pub tuning: Option<FilterTuning>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuerySection {
    /// Boxes as `"xlo,xhi,ylo,yhi[,zlo,zhi]"`.
    pub regions: Vec<String>,
    /// Points as `"x,y[,z]"`.
    pub points: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub measurements: Option<PathBuf>,
    pub model: ModelKind,
    pub params: ParamsSection,
    pub jump_prior: JumpPrior,
    pub filter: FilterSection,
    pub observation: ObservationSection,
    pub prior: PriorSection,
    pub scenario: ScenarioConfig,
    pub benchmark: BenchmarkSection,
    pub queries: QuerySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = FilterTuning::default();
        Self {
            seed: None,
            out_dir: PathBuf::from("out"),
            measurements: None,
            model: ModelKind::PiecewiseConstant,
            params: ParamsSection::default(),
            jump_prior: JumpPrior::Gamma {
                alpha: t.piecewise.alpha,
                beta: t.piecewise.beta,
            },
            filter: FilterSection::default(),
            observation: ObservationSection::default(),
            prior: PriorSection::default(),
            scenario: ScenarioConfig::default(),
            benchmark: BenchmarkSection::default(),
            queries: QuerySection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// `--model` names.
pub fn parse_model_name(name: &str, current: &ModelKind) -> Result<ModelKind, CliError> {
    Ok(match name {
        "baseline" | "vl-d" => ModelKind::Baseline,
        "piecewise-constant" | "vl-pc" => ModelKind::PiecewiseConstant,
        "jump-diffusion" | "vl-jd" => ModelKind::JumpDiffusion,
        "fast-manoeuvring" | "vl-fmt" => ModelKind::FastManoeuvring,
        "multi-hypothesis" | "vl-multhyp" => match current {
            ModelKind::MultiHypothesis { .. } => current.clone(),
            _ => {
                return Err(CliError::Config(
                    "multi-hypothesis model needs [model.destinations] in the config file".into(),
                ))
            }
        },
        other => return Err(CliError::Config(format!("unknown model `{other}`"))),
    })
}
