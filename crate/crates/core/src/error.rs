use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("no usable rows after cleaning")]
    EmptyAfterCleaning,

    #[error("insufficient history: need at least {needed} bars, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("qubit count {0} outside supported range 1..=12")]
    QubitCount(usize),

    #[error("qubit index {index} out of range for {n_qubits}-qubit register")]
    QubitIndex { index: usize, n_qubits: usize },

    #[error("CNOT control and target must differ (both {0})")]
    CnotSameQubit(usize),

    #[error("invalid label index {0}")]
    InvalidLabel(usize),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dataset contains a single class; both up and down samples are required")]
    SingleClass,

    #[error("episode already finished; call reset first")]
    EpisodeDone,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("missing artifact {path}; run `{stage}` first")]
    MissingArtifact { path: PathBuf, stage: &'static str },

    #[error("config error: {0}")]
    Config(String),

    #[error("worker {worker} panicked: {message}")]
    WorkerPanicked { worker: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
