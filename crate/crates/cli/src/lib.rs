//! Command implementations behind the `vl-intent` binary.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::Args;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<vl_intent::Error> for CliError {
    fn from(e: vl_intent::Error) -> Self {
        use vl_intent::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidParameter(_) | E::UnknownMethod(_) | E::Contract(_) => CliError::Config(msg),
            E::Data { .. } | E::Io(_) | E::Csv(_) | E::Json(_) | E::Dimension(_) => {
                CliError::Data(msg)
            }
            E::Numeric(_) | E::Degenerate { .. } => CliError::Numeric(msg),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// baseline, piecewise-constant, jump-diffusion, fast-manoeuvring or multi-hypothesis.
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub particles: Option<usize>,
    #[arg(long, global = true)]
    pub ess_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Measurement CSV with header `t,x[,y[,z]]`.
    #[arg(long, global = true)]
    pub measurements: Option<PathBuf>,
    /// Box `xlo,xhi,ylo,yhi[,zlo,zhi]`; may be repeated.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub region: Vec<String>,
    /// Point `x,y[,z]`; may be repeated.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub point: Vec<String>,
}
