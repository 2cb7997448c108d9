use std::path::PathBuf;

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("numerical failure: {0}")]
    Numerics(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 success, 1 config error, 2 runtime or numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io { .. } | CliError::Numerics(_) => 2,
        }
    }
}

/// Core errors raised while running a validated config.
pub(crate) fn numerics(e: fhjm_core::Error) -> CliError {
    CliError::Numerics(e.to_string())
}

/// Core errors raised while validating a config.
pub(crate) fn invalid(e: fhjm_core::Error) -> CliError {
    CliError::Config(e.to_string())
}
