use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("composition error: inner output dim {inner_out} != outer input dim {outer_in}")]
    Composition { inner_out: usize, outer_in: usize },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("validation error in layer {layer}: {message}")]
    Validation { layer: usize, message: String },

    #[error("unsupported activation {name:?} in layer {layer} (only identity, relu, leaky_relu)")]
    UnsupportedActivation { layer: usize, name: String },

    #[error("state error: {0}")]
    State(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("scale error: {0}")]
    Scale(String),

    #[error("online sampler stalled after {rejections} rejections (estimated acceptance rate {acceptance_rate:.3e})")]
    Timeout { rejections: u64, acceptance_rate: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// Configuration and input problems map to 2, numerical failures and
    /// sampler stalls to 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Timeout { .. } | Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}
