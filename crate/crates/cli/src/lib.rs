//! Config-driven experiment harness around `tensorse`.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod output;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error("simulation: {0}")]
    Simulation(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) | Self::Io(_) => 1,
            Self::Certification(_) => 2,
            Self::Solver(_) | Self::Simulation(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<tensorse::sampling::SamplingError> for CliError {
    fn from(e: tensorse::sampling::SamplingError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<tensorse::tensor::TensorError> for CliError {
    fn from(e: tensorse::tensor::TensorError) -> Self {
        Self::Config(e.to_string())
    }
}
