use std::path::{Path, PathBuf};

use bridgekg::encoder::CheckpointError;
use bridgekg::extractor::ExtractorError;
use bridgekg::kg::KgError;
use bridgekg::subgraph::CacheError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("data: {0}")]
    Data(String),
    #[error("numerical: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Data(_) => 4,
            CliError::Numerical(_) => 5,
        }
    }

    pub(crate) fn from_kg(path: &Path, e: KgError) -> Self {
        match e {
            KgError::Io(io) => CliError::io(path, io),
            other => CliError::Data(format!("{}: {other}", path.display())),
        }
    }

    pub(crate) fn from_cache(path: &Path, e: CacheError) -> Self {
        match e {
            CacheError::Io(io) => CliError::io(path, io),
            other => CliError::Data(format!("{}: {other}", path.display())),
        }
    }

    pub(crate) fn from_checkpoint(path: &Path, e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io(io) => CliError::io(path, io),
            other => CliError::Data(format!("{}: {other}", path.display())),
        }
    }
}

impl From<ExtractorError> for CliError {
    fn from(e: ExtractorError) -> Self {
        match e {
            ExtractorError::InvalidConfig(m) => CliError::Config(m),
            ExtractorError::EmptyTrainingSet => CliError::Data(e.to_string()),
            ExtractorError::Encoder(bridgekg::encoder::EncoderError::NumericalInstability(_))
            | ExtractorError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            ExtractorError::Encoder(_) => CliError::Data(e.to_string()),
        }
    }
}
