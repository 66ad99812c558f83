use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bin schema: {0}")]
    InvalidSchema(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("schema mismatch: expected {expected} bins, got {got}")]
    SchemaMismatch { expected: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("all batches are empty")]
    EmptyBatch,

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error(
        "all confidences are zero with alpha = {alpha}; retry with alpha = 0 for uniform weights"
    )]
    DegenerateConfidence { alpha: f64 },

    #[error("correlation undefined for a constant sequence")]
    UndefinedCorrelation,

    #[error("no comparable pairs")]
    NoComparablePairs,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph has {nodes} nodes, exact solving supports at most {max}; an approximate solver is required")]
    GraphTooLarge { nodes: usize, max: usize },

    #[error("degenerate trace: every outcome scored zero")]
    DegenerateTrace,

    #[error("scorer failed at {location}: {message}")]
    Scorer { location: String, message: String },

    #[error("unknown {kind} strategy `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: duplicate id `{id}`")]
    Duplicate {
        path: PathBuf,
        line: usize,
        id: String,
    },

    #[error("{path}:{line}: {message}")]
    Range {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code: 2 for numeric failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) | Error::Divergence { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
