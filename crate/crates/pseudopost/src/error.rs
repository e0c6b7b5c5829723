use std::path::PathBuf;

use pseudopost_core::ErrorKind;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] pseudopost_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },
    #[error("configuration: {0}")]
    Config(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: u64, msg: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// 2 configuration, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Parse { .. } => 3,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            },
        }
    }
}
