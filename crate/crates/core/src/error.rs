use thiserror::Error;

/// Failure modes surfaced by the analytical and simulation pipelines.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or parameter combination fails validation.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An iterative numerical routine failed to deliver the requested accuracy.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The requested meta distribution has (numerically) zero variance, so a
    /// beta shape cannot be fitted. Callers that can tolerate this fall back
    /// to a point mass at the first moment.
    #[error("degenerate meta distribution: variance {variance:.3e} around mean {mean:.6}")]
    DegenerateMeta { mean: f64, variance: f64 },

    /// A chain's blocks do not fit together, or probability mass leaked.
    #[error("chain corruption: {0}")]
    ChainCorrupt(String),

    /// An error raised while evaluating one fragment-success class.
    #[error("class {class}: {source}")]
    Class {
        class: usize,
        #[source]
        source: Box<Error>,
    },

    /// File-level configuration problem, tagged with the offending key path.
    #[error("config key `{path}`: {message}")]
    ConfigKey { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn chain(msg: impl Into<String>) -> Self {
        Error::ChainCorrupt(msg.into())
    }

    pub(crate) fn key(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ConfigKey {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn for_class(self, class: usize) -> Self {
        Error::Class {
            class,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
