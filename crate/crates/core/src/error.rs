use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid register width {0}: at least 2 qubits are required")]
    InvalidWidth(usize),
    #[error("qubit index {qubit} out of range for a {n_qubits}-qubit register")]
    QubitIndex { qubit: usize, n_qubits: usize },
    #[error("invalid gate: {0}")]
    InvalidGate(String),
    #[error("shot count must be at least 1")]
    InvalidShots,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid circuit spec: {0}")]
    InvalidSpec(String),
    #[error("layer index {index} out of range for depth {depth}")]
    LayerIndex { index: usize, depth: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid bandwidth {0}: must be positive and finite")]
    InvalidBandwidth(f64),
    #[error("degenerate plane: {0}")]
    DegeneratePlane(String),
    #[error("at least 2 minima are required, found {0}")]
    InsufficientMinima(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for failures caused by degenerate input data rather than a bad request.
    pub fn is_degenerate_input(&self) -> bool {
        matches!(
            self,
            Error::InsufficientData(_)
                | Error::InvalidBandwidth(_)
                | Error::DegeneratePlane(_)
                | Error::InsufficientMinima(_)
        )
    }
}
