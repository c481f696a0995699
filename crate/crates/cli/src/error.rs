use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Ctow(#[from] ctow::CtowError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot read config file {path}: {message}")]
    Config { path: String, message: String },
    #[error("model expects {expected} feature columns, input has {found}")]
    IncompatibleModel { expected: usize, found: usize },
    #[error("corrupt model bundle: {0}")]
    CorruptBundle(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Write { .. } | CliError::Internal(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
