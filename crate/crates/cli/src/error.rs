use histsem_core::corpus::CorpusError;
use histsem_core::encoder::EncoderError;
use histsem_core::stats::StatsError;
use histsem_core::usage::UsageError;
use std::path::Path;
use thiserror::Error;

/// Command failure, carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or malformed input: exit 2.
    #[error("{0}")]
    Invalid(String),
    /// File system failure: exit 3.
    #[error("{0}")]
    Io(String),
    /// Usage ids or pair sets that do not line up: exit 4.
    #[error("{0}")]
    Misaligned(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Io(_) => 3,
            CliError::Misaligned(_) => 4,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        CliError::Invalid(message.into())
    }

    /// Prefixes the message, keeping the exit code.
    pub fn context(self, what: &str) -> Self {
        match self {
            CliError::Invalid(m) => CliError::Invalid(format!("{what}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{what}: {m}")),
            CliError::Misaligned(m) => CliError::Misaligned(format!("{what}: {m}")),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<EncoderError> for CliError {
    fn from(e: EncoderError) -> Self {
        match e {
            EncoderError::Io { .. } | EncoderError::Corpus(CorpusError::Io { .. }) => {
                CliError::Io(e.to_string())
            }
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<UsageError> for CliError {
    fn from(e: UsageError) -> Self {
        match e {
            UsageError::Io { .. } => CliError::Io(e.to_string()),
            UsageError::MissingEmbedding { .. } | UsageError::MixedEncoders(_) => {
                CliError::Misaligned(e.to_string())
            }
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::Misaligned(_) | StatsError::KeyMismatch(_) => {
                CliError::Misaligned(e.to_string())
            }
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
