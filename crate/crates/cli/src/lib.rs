//! Experiment driver: TOML configs, task pipeline and artifact tree.

pub mod config;
pub mod output;
pub mod pipeline;

use std::fmt;

pub use config::{ConfigError, ExperimentConfig};

/// Reference configurations shipped with the binary.
pub const BUNDLED: &[(&str, &str)] = &[
    ("eckart-k1", include_str!("../configs/eckart-k1.toml")),
    ("eckart-k3", include_str!("../configs/eckart-k3.toml")),
    ("eckart-unforced", include_str!("../configs/eckart-unforced.toml")),
    ("roll-heave-quasi", include_str!("../configs/roll-heave-quasi.toml")),
    ("roll-heave-ou", include_str!("../configs/roll-heave-ou.toml")),
    ("roll-heave-none", include_str!("../configs/roll-heave-none.toml")),
    ("autonomous-flux", include_str!("../configs/autonomous-flux.toml")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Numerical(saddlepath::Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

/// Validates `cfg` against its output directory and runs its tasks.
pub fn run(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let out = cfg.output_dir();
    cfg.validate(&out)?;
    log::info!("config {} ({}), output {}", cfg.name, &cfg.hash()[..12], out.display());
    pipeline::Pipeline::new(cfg)?.run()
}
