//! Library side of the `cosmargin` command: configuration handling and one
//! function per subcommand, so the commands can be driven from tests.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_eval, cmd_export_features, cmd_gradcheck, cmd_margins_trace, cmd_train, load_split, GradcheckOutcome,
    Split, TrainArtifacts,
};
pub use config::{Assignments, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration, input files or arguments.
    #[error("{0}")]
    Validation(String),
    /// A numerical check failed or training diverged.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<cosmargin::Error> for CliError {
    fn from(e: cosmargin::Error) -> Self {
        match e {
            cosmargin::Error::Numerical(_) => CliError::Numerical(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}
