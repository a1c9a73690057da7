use std::path::PathBuf;

use thiserror::Error;
use xprojct_core::CoreError;
use xprojct_nn::NnError;
use xprojct_stats::StatsError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const PARSE: i32 = 3;
    pub const RESOURCE: i32 = 4;
    pub const TRAINING: i32 = 5;
    pub const PARTIAL: i32 = 6;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: CoreError,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{failed} of {total} series failed")]
    Partial { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, CliError>;

fn core_code(e: &CoreError) -> i32 {
    match e {
        CoreError::Config(_) | CoreError::Vocabulary(_) | CoreError::Precondition(_) => exit::CONFIG,
        CoreError::Io { .. } | CoreError::Resource(_) => exit::RESOURCE,
        _ => exit::PARSE,
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        CliError::Json {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Json { .. } => exit::CONFIG,
            CliError::Stage { source, .. } | CliError::Core(source) => core_code(source),
            CliError::Nn(e) => match e {
                NnError::Diverged { .. } => exit::TRAINING,
                NnError::Config(_) | NnError::Shape(_) => exit::CONFIG,
                NnError::Io { .. } => exit::RESOURCE,
                _ => exit::PARSE,
            },
            CliError::Stats(_) => exit::FAILURE,
            CliError::Io { .. } => exit::RESOURCE,
            CliError::Partial { .. } => exit::PARTIAL,
        }
    }
}
