use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid genealogy {marks:?}: {reason}")]
    InvalidGenealogy { marks: Vec<u8>, reason: String },

    #[error("integer overflow: {0}")]
    Overflow(String),

    #[error("time step {k} outside [{first}, {last}]")]
    OutOfRange { k: u32, first: u32, last: u32 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate velocity (speed {speed})")]
    DegenerateVelocity { speed: f64 },

    #[error("assignment infeasible: row {row} has no admissible column")]
    Infeasible { row: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("filter diverged at step {step}: {message}")]
    Divergence { step: u32, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGenealogy { .. } => "invalid_genealogy",
            Error::Overflow(_) => "overflow",
            Error::OutOfRange { .. } => "out_of_range",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::Numerical(_) => "numerical",
            Error::DegenerateVelocity { .. } => "degenerate_velocity",
            Error::Infeasible { .. } => "infeasible",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Divergence { .. } => "divergence",
            Error::InvalidInput(_) => "invalid_input",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
