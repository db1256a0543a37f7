use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),

    #[error("unknown command `{0}`")]
    UnknownCommand(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("--seed is required for `{0}`")]
    MissingSeed(&'static str),

    #[error("{0}")]
    Invalid(String),

    /// A checked inequality or threshold did not hold; artifacts were still written.
    #[error("numerical check failed: {0}")]
    CheckFailed(String),

    #[error(transparent)]
    Core(#[from] sdm_core::Error),

    #[error(transparent)]
    Nn(#[from] sdm_nn::Error),

    #[error(transparent)]
    Gan(#[from] sdm_gan::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// 2 for numerical failures, 1 for everything the caller got wrong.
    pub fn exit_code(&self) -> i32 {
        use sdm_core::Error as C;
        match self {
            Error::CheckFailed(_) => 2,
            Error::Core(C::SolveFailed(_) | C::NonFinite(_)) => 2,
            Error::Nn(sdm_nn::Error::NonFiniteLoss(_)) => 2,
            Error::Gan(sdm_gan::Error::NonFiniteLoss(_)) => 2,
            _ => 1,
        }
    }
}
