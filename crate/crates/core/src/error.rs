use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate window: {0}")]
    EmptyWindow(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no sample of region `{0}` found at maximum probing resolution")]
    EmptyRegion(String),
    #[error("not a density point: {0}")]
    NotDensityPoint(String),
    #[error("not a density set: {0}")]
    NotDensitySet(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("field unbounded near the query point: {0}")]
    UnboundedNearX(String),
    #[error("difference quotients exceed cap {cap}: {detail}")]
    NonLipschitz { cap: f64, detail: String },
    #[error("support mismatch along {direction:?}: hull {hull} vs gradient sup {gradsup}")]
    SupportMismatch {
        direction: Vec<f64>,
        hull: f64,
        gradsup: f64,
    },
    #[error("ambiguous normal at {point:?}: distance gradient norm {norm}")]
    AmbiguousNormal { point: Vec<f64>, norm: f64 },
    #[error("region `{0}` is not flagged as a Lipschitz domain")]
    NonLipschitzDomain(String),
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("`{name}` expects {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("unknown identifier `{name}` at column {column}")]
    UnknownIdentifier { name: String, column: usize },
    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonLipschitz { .. }
            | Error::SupportMismatch { .. }
            | Error::AmbiguousNormal { .. }
            | Error::UnboundedNearX(_) => 3,
            _ => 2,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
