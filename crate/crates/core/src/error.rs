use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?} ({context})")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
        context: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("duplicate question id {0:?}")]
    DuplicateQuestionId(String),

    #[error("duplicate token {token:?} at line {line}")]
    DuplicateToken { token: String, line: usize },

    #[error("id {id} out of range (table size {size})")]
    IdOutOfRange { id: usize, size: usize },

    #[error("unknown user {0:?}")]
    UnknownUser(String),

    #[error("question {0:?} has a tied top vote; no unique expert")]
    TiedTopVote(String),

    #[error("gold user {user:?} missing from the candidate scorer for question {question:?}")]
    GoldUserMissing { question: String, user: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("checkpoint version mismatch: found {found}, expected {expected}")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint fingerprint mismatch for {0}")]
    FingerprintMismatch(&'static str),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
