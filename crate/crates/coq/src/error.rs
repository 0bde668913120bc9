use thiserror::Error;

use crate::executor::SqlError;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum CoqError {
    #[error("malformed input: {0}")]
    MalformedInput(String),

    #[error("empty table: {0}")]
    EmptyTable(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("LLM call budget exhausted ({used}/{max})")]
    BudgetExhausted { used: u32, max: u32 },

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("replay backend has no recording for {role} prompt (key {key})")]
    ReplayMiss { role: String, key: String },

    #[error("no SQL block found in response")]
    NoSqlFound,

    #[error("no yes/no decision found in response")]
    NoDecisionFound,

    #[error("database engine failure: {0}")]
    EngineFailure(String),

    #[error("sql error: {0}")]
    Sql(#[from] SqlError),

    #[error("malformed dataset: {0}")]
    MalformedDataset(String),

    #[error("record/example id mismatch: {0}")]
    IdMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoqError>;
