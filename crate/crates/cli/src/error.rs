use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config or input data. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// The solver or an SVD failed. Exit code 1.
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => 1,
            CliError::Usage(_) | CliError::Io { .. } => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<coda_core::Error> for CliError {
    fn from(e: coda_core::Error) -> Self {
        match e {
            coda_core::Error::InvalidInput(msg) => CliError::Usage(msg),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

macro_rules! usage {
    ($($arg:tt)*) => {
        $crate::error::CliError::Usage(format!($($arg)*))
    };
}
pub(crate) use usage;
