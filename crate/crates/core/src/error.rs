use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = MqeError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MqeError {
    /// Malformed arguments passed to a library operation.
    #[error("input error: {0}")]
    Input(String),

    /// A structurally valid input that the operation cannot handle.
    #[error("degenerate input: node {node} {reason}")]
    Degenerate { node: usize, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{}:{line}: {msg}", file.display())]
    Parse { file: PathBuf, line: usize, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure at epoch {epoch}: {msg}")]
    Numerical { epoch: usize, msg: String },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl MqeError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MqeError::Io { path: path.into(), source }
    }

    /// Short tag naming the subsystem the error comes from.
    pub fn module(&self) -> &'static str {
        match self {
            MqeError::Input(_) | MqeError::Degenerate { .. } => "graph",
            MqeError::Config(_) => "config",
            MqeError::Parse { .. } | MqeError::Data(_) | MqeError::Io { .. } => "data",
            MqeError::Numerical { .. } => "estimator",
            MqeError::Eval(_) => "eval",
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            MqeError::Config(_) => 2,
            MqeError::Numerical { .. } => 4,
            _ => 3,
        }
    }
}
