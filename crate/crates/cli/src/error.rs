use thiserror::Error;

/// CLI failure, grouped by process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<qcbm_core::Error> for CliError {
    fn from(e: qcbm_core::Error) -> Self {
        if e.is_degenerate_input() {
            CliError::Degenerate(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}
