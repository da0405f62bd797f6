pub mod config;
pub mod experiments;
pub mod report;

pub use config::{ExperimentConfig, OutputFormat};
pub use experiments::run;
pub use report::Report;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<dyadlab::Error> for CliError {
    fn from(e: dyadlab::Error) -> Self {
        use dyadlab::Error as E;
        match e {
            E::Io(_) | E::Format(_) => CliError::Io(e.to_string()),
            E::InvalidParameter(_) | E::OutOfWindow { .. } | E::MeshMismatch(_) | E::Resolution { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numeric(e.to_string()),
        }
    }
}
