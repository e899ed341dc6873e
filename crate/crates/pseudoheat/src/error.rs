use std::path::{Path, PathBuf};

/// Errors of the file formats, config loader and experiment drivers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("config file {} not found", path.display())]
    ConfigMissing { path: PathBuf },
    #[error("{}: {msg}", path.display())]
    ConfigSyntax { path: PathBuf, msg: String },
    #[error("{}: {msg}", path.display())]
    ConfigUnknownKey { path: PathBuf, msg: String },
    #[error("{field}: {msg}")]
    ConfigRange { field: String, msg: String },
    #[error("scene {id}: {msg}")]
    Scene { id: String, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] pseudoheat_core::Error),
    #[error("serialization failed: {0}")]
    Serialize(String),
}

/// Process exit status for usage problems (bad arguments, bad config).
pub const EXIT_USAGE: i32 = 1;
/// Process exit status for failures while running.
pub const EXIT_RUNTIME: i32 = 2;

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::ConfigMissing { .. } => "config-missing",
            Error::ConfigSyntax { .. } => "config-syntax",
            Error::ConfigUnknownKey { .. } => "config-unknown-key",
            Error::ConfigRange { .. } => "config-range",
            Error::Scene { .. } => "scene-mismatch",
            Error::Usage(_) => "usage",
            Error::Core(e) => e.kind(),
            Error::Serialize(_) => "serialize",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConfigMissing { .. }
            | Error::ConfigSyntax { .. }
            | Error::ConfigUnknownKey { .. }
            | Error::ConfigRange { .. }
            | Error::Usage(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn format(path: &Path, msg: impl Into<String>) -> Self {
        Error::Format { path: path.to_path_buf(), msg: msg.into() }
    }

    pub(crate) fn range(field: &str, msg: impl Into<String>) -> Self {
        Error::ConfigRange { field: field.to_string(), msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
