use std::path::PathBuf;

use thiserror::Error;

/// Failures of the file layer and the commands. Each variant maps to one
/// machine-readable category printed by the binary.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A malformed input file; `line` is the 1-based line in the file.
    #[error("{}: {}{msg}", path.display(), line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Load {
        path: PathBuf,
        line: Option<u64>,
        msg: String,
    },
    #[error(transparent)]
    Model(#[from] convospat_core::Error),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Load { .. } => "input",
            CliError::Model(_) => "model",
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Load { .. } => 5,
            CliError::Model(_) => 6,
        }
    }

    /// The single-line form `error: <category>: <message>`.
    pub fn report(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error: {}: {}", self.category(), msg)
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn load(path: impl Into<PathBuf>, line: Option<u64>, msg: impl Into<String>) -> Self {
        CliError::Load {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
