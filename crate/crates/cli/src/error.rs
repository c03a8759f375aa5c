use gamed_core::GamedError;

/// A failed command, classified by the exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("model file error: {0}")]
    ModelFile(String),
    #[error("lookup error: {0}")]
    Lookup(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::ModelFile(_) => 5,
            CliError::Lookup(_) => 6,
        }
    }

    pub fn config(key: &str, reason: impl std::fmt::Display) -> Self {
        CliError::Config(format!("`{key}`: {reason}"))
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Other(format!("{}: {e}", path.display()))
    }

    /// Classifies a core error raised while reading or feeding data.
    pub fn data(context: impl std::fmt::Display, e: GamedError) -> Self {
        match e {
            GamedError::Config { .. } | GamedError::Divergence { .. } => e.into(),
            e => CliError::Data(format!("{context}: {e}")),
        }
    }
}

impl From<GamedError> for CliError {
    fn from(e: GamedError) -> Self {
        match e {
            GamedError::Config { key, reason } => CliError::config(&key, reason),
            GamedError::Divergence { .. } => CliError::Divergence(e.to_string()),
            GamedError::Io { .. }
            | GamedError::MalformedLine { .. }
            | GamedError::MissingKey { .. }
            | GamedError::EmptyDataset
            | GamedError::ImageShape { .. }
            | GamedError::OutOfVocabulary { .. }
            | GamedError::IndivisibleGrid { .. }
            | GamedError::KernelTooLarge { .. }
            | GamedError::EmptySequence => CliError::Data(e.to_string()),
            e => CliError::Other(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
