use thiserror::Error;

pub type Result<T> = std::result::Result<T, CtowError>;

#[derive(Debug, Error)]
pub enum CtowError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed csv at line {line}: {message}")]
    MalformedCsv { line: u64, message: String },

    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("label column has {0} distinct values (at most 1000 allowed)")]
    TooManyClasses(usize),

    #[error("dataset needs at least two classes, found {0}")]
    TooFewClasses(usize),

    #[error("dataset has unlabeled rows but a fully labeled one is required")]
    NotFullyLabeled,

    #[error("class {class} has {size} rows, fewer than the {folds} folds requested")]
    ClassTooSmall {
        class: usize,
        size: usize,
        folds: usize,
    },

    #[error("fold index {index} out of range for {folds} folds")]
    BadFoldIndex { index: usize, folds: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("labels cover a single class")]
    SingleClass,

    #[error("fixed weight {0} outside [0, 1)")]
    InvalidFixedWeight(f64),

    #[error("index {index} out of range (len {len})")]
    BadIndex { index: usize, len: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid probability matrix: {0}")]
    InvalidProbabilities(String),

    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
