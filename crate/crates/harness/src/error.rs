use std::path::PathBuf;

use mmab_sa::{EngineError, ModelError};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("unknown scenario {0:?} (not a preset and no such file)")]
    UnknownScenario(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{algorithm} on seed {seed}: {source}")]
    Run {
        algorithm: &'static str,
        seed: u64,
        #[source]
        source: EngineError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Serialize(#[from] toml::ser::Error),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }
}
