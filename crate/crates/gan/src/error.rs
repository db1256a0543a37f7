use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite {0} loss")]
    NonFiniteLoss(&'static str),

    #[error("every sampled state was terminal")]
    EmptyAfterTerminalFilter,

    #[error("{0} batch is empty")]
    EmptyBatch(&'static str),

    #[error("dynamics ensemble has not been trained")]
    UntrainedEnsemble,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid environment: {0}")]
    InvalidEnv(String),

    #[error(transparent)]
    Core(#[from] sdm_core::Error),

    #[error(transparent)]
    Nn(sdm_nn::Error),

    #[error("checkpoint: {0}")]
    Checkpoint(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<sdm_nn::Error> for Error {
    fn from(e: sdm_nn::Error) -> Self {
        match e {
            sdm_nn::Error::ShapeMismatch(m) => Error::ShapeMismatch(m),
            sdm_nn::Error::NonFiniteLoss(what) => Error::NonFiniteLoss(what),
            sdm_nn::Error::UntrainedEnsemble => Error::UntrainedEnsemble,
            other => Error::Nn(other),
        }
    }
}
