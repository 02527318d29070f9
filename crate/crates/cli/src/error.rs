use std::fmt;
use std::path::{Path, PathBuf};

use pact_core::PactError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const NO_LAYER: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const INVALID: i32 = 4;
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io { path: PathBuf, source: std::io::Error },
    NoMatch(String),
    Core { context: Option<PathBuf>, source: PactError },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Io { .. } | CliError::NoMatch(_) => exit::IO,
            CliError::Core { source, .. } => match source {
                PactError::Io { .. } => exit::IO,
                e if e.is_parameter_error() => exit::USAGE,
                _ => exit::INVALID,
            },
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Attaches the file a core error came from.
    pub fn at(path: &Path) -> impl FnOnce(PactError) -> CliError + '_ {
        move |source| CliError::Core {
            context: (!matches!(source, PactError::Io { .. })).then(|| path.to_path_buf()),
            source,
        }
    }
}

impl From<PactError> for CliError {
    fn from(source: PactError) -> Self {
        CliError::Core {
            context: None,
            source,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::NoMatch(pattern) => write!(f, "no files matched {pattern:?}"),
            CliError::Core {
                context: Some(path),
                source,
            } => write!(f, "{}: {source}", path.display()),
            CliError::Core { context: None, source } => write!(f, "{source}"),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
