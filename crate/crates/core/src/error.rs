use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A user projection oracle returned a point that fails the explicit constraints.
    #[error("projection oracle returned an infeasible point (violation {violation:e})")]
    ContractViolation { point: Vec<f64>, violation: f64 },

    /// The objective returned NaN or an infinity.
    #[error("objective returned non-finite value {value} at {point:?}")]
    NonFinite { point: Vec<f64>, value: f64 },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stage {stage}: {source}")]
    AtStage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration { iteration, source: Box::new(self) }
    }

    pub(crate) fn at_stage(self, stage: usize) -> Self {
        Error::AtStage { stage, source: Box::new(self) }
    }

    /// True if the root cause is an objective evaluation failure.
    pub fn is_evaluation(&self) -> bool {
        match self {
            Error::NonFinite { .. } => true,
            Error::AtIteration { source, .. } | Error::AtStage { source, .. } => {
                source.is_evaluation()
            }
            _ => false,
        }
    }
}
