use std::path::{Path, PathBuf};

/// Errors of the file formats and commands.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: malformed header: {msg}", path.display())]
    Header { path: PathBuf, msg: String },
    #[error("{}: truncated payload: expected {expected} bytes, found {found}", path.display())]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{}: manifest mismatch: {msg}", path.display())]
    Manifest { path: PathBuf, msg: String },
    #[error("checkpoint {}: {msg}", path.display())]
    Checkpoint { path: PathBuf, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] deeptopo_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Process exit status of a usage error.
pub const EXIT_USAGE: i32 = 1;
/// Process exit status of a data or file-format error.
pub const EXIT_DATA: i32 = 2;
/// Process exit status of a failed gradient check.
pub const EXIT_GRADCHECK: i32 = 3;

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |source| Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn manifest(path: &Path, msg: impl Into<String>) -> Self {
        Error::Manifest {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }

    pub(crate) fn checkpoint(path: &Path, msg: impl Into<String>) -> Self {
        Error::Checkpoint {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }
}
