use gamed_tensor::TensorError;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum GamedError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("token id {id} is outside the vocabulary of size {vocab}")]
    OutOfVocabulary { id: u32, vocab: usize },
    #[error("image {height}x{width} cannot be split into {per_side}x{per_side} equal patches")]
    IndivisibleGrid {
        height: usize,
        width: usize,
        per_side: usize,
    },
    #[error("image {height}x{width} does not match the configured {grid}x{grid} grid")]
    ImageShape {
        height: usize,
        width: usize,
        grid: usize,
    },
    #[error("kernel extent {kernel} exceeds image {height}x{width}")]
    KernelTooLarge {
        kernel: usize,
        height: usize,
        width: usize,
    },
    #[error("token sequence is empty")]
    EmptySequence,
    #[error("task index {task} out of range for {tasks} tasks")]
    TaskIndex { task: usize, tasks: usize },
    #[error("malformed vote input: {0}")]
    MalformedVote(String),
    #[error("invalid `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: missing key `{key}`")]
    MissingKey { line: usize, key: &'static str },
}

impl GamedError {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, GamedError>;
