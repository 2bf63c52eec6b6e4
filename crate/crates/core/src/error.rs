use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("line {line}: duplicate instruction id `{id}`")]
    DuplicateId { line: usize, id: String },

    #[error("line {line}: instruction `{id}` has {n} responses, at least 2 are required")]
    TooFewResponses { line: usize, id: String, n: usize },

    #[error("no record for instruction `{0}`")]
    MissingId(String),

    #[error("instruction `{id}`: expected {expected} entries, found {found}")]
    CountMismatch {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("zero-norm vector{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    ZeroNorm { context: Option<String> },

    #[error("non-finite value {value} {context}")]
    NonFinite { value: f64, context: String },

    #[error("wrong score kind: expected {expected}, found {found}")]
    WrongScoreKind { expected: String, found: String },

    #[error("invalid selection: {0}")]
    InvalidSelection(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("exact enumeration needs {subsets} subsets (cap {cap}); use the greedy solver")]
    CapExceeded { subsets: u128, cap: u128 },

    #[error("budget: {0}")]
    Budget(String),

    #[error("scorer transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },

    #[error("annotation session is closed")]
    SessionClosed,

    #[error("unknown task `{0}`")]
    TaskNotFound(String),

    #[error("task `{0}` is already done")]
    TaskDone(String),

    #[error("a task for instruction `{0}` is already queued in this session")]
    DuplicateTask(String),

    #[error("invalid judgment: {0}")]
    InvalidJudgment(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.to_string(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
