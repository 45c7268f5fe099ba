use thiserror::Error;

/// Errors surfaced by the numeric and inference layers.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("empty reduction")]
    EmptyReduction,

    #[error("not positive definite")]
    NotPositiveDefinite,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("need two samples per set")]
    NeedTwoSamples,

    #[error("invalid weights")]
    InvalidWeights,

    #[error("degenerate weights; raise base_bandwidth")]
    DegenerateWeights,

    #[error("all particles rejected")]
    AllParticlesRejected,

    #[error("prior-kernel mismatch")]
    PriorKernelMismatch,

    #[error("singular mass matrix")]
    SingularMassMatrix,

    #[error("model mass outside prior")]
    ModelMassOutsidePrior,

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error("{0}")]
    Config(String),

    #[error("at iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<CoreError>,
    },
}

impl CoreError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CoreError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        CoreError::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn at_iteration(self, iteration: usize) -> Self {
        CoreError::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
