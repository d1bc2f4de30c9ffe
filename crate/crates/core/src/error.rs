use thiserror::Error;

/// Errors raised anywhere in the reconstruction toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid system matrix: {0}")]
    InvalidMatrix(String),

    #[error("node index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("trajectory diverged at step {step} (|x| > 1e9); dt too large or unstable dynamics")]
    Divergence { step: usize },

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("too few Welch segments: {available} available, at least 8 required")]
    TooFewSegments { available: usize },

    #[error(
        "input PSD estimate is not positive ({0:.6e}); invalid spectrum or wrong kernel vector"
    )]
    NonPositivePsd(f64),

    #[error("spectrum is not consistent with a Laplacian (all eigenvalues negative)")]
    NonLaplacian,

    #[error("frequency mismatch: {0} vs {1}")]
    FrequencyMismatch(f64, f64),

    #[error("missing grounded spectrum for node {0}")]
    MissingGrounding(usize),

    #[error("mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Divergence { .. }
            | Error::Singular { .. }
            | Error::NonPositivePsd(_)
            | Error::NonLaplacian => true,
            Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
