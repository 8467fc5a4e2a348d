use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("position {position:?} lies outside the domain")]
    OutsideDomain { position: Vec<f64> },

    #[error("degenerate feature: ReLU activations vanish at {position:?}")]
    DegenerateFeature { position: Vec<f64> },

    /// The M matrix is numerically singular; `y` sits (close to) the degenerate set.
    #[error("M matrix is numerically singular (condition estimate {condition:e})")]
    SingularM { condition: f64 },

    #[error("degenerate certificate: {0}")]
    DegenerateCertificate(String),

    #[error("divergence oracle failed: {0}")]
    OracleFailure(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
