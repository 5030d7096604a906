//! Crate-wide error type.

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by corpus handling, feature extraction, modelling and scoring.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A line of an input file could not be parsed.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// An invariant on domain data was violated.
    #[error("validation error: {0}")]
    Validation(String),

    /// A configuration value or combination is unusable.
    #[error("configuration error: {0}")]
    Config(String),

    /// Array shapes passed to a numeric primitive do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// Training produced a non-finite loss or gradient.
    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    /// Fewer data points than model complexity requires.
    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// A speaker cluster ended up with no frames.
    #[error("empty cluster for speaker {speaker}")]
    EmptyCluster { speaker: &'static str },

    /// Audio too short to produce a single analysis window.
    #[error("empty features: {0}")]
    EmptyFeatures(String),

    /// A metric has no defined value on this input.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A required artifact (checkpoint, feature file) is missing.
    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
