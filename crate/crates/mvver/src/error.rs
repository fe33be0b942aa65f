use thiserror::Error;

/// Errors raised by dataset handling, training, and the refinement pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("label out of range at row {row}: {label} with {num_classes} classes")]
    LabelOutOfRange {
        row: usize,
        label: i64,
        num_classes: usize,
    },

    #[error("inconsistent column count at row {row}: expected {expected}, got {got}")]
    ColumnCount {
        row: usize,
        expected: usize,
        got: usize,
    },

    #[error("dataset must have at least 2 classes")]
    SingleClass,

    #[error("class {class} has {count} members, needs at least {needed} to split")]
    ClassTooSmall {
        class: usize,
        count: usize,
        needed: usize,
    },

    #[error("class {0} missing from dataset")]
    MissingClass(usize),

    #[error("at least 2 views required, got {0}")]
    TooFewViews(usize),

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("model shape mismatch across views")]
    ModelMismatch,

    #[error("non-finite loss at epoch {epoch}: training diverged")]
    Divergence { epoch: usize },

    #[error("vote table does not cover dataset ids exactly")]
    VoteCoverage,

    #[error("entropy records do not match weak-set ids")]
    RecordCoverage,

    #[error("iteration {iteration}: strong set of {size} samples is below minimum {min}")]
    StrongSetTooSmall {
        iteration: usize,
        size: usize,
        min: usize,
    },

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("empty test set")]
    EmptyTestSet,

    #[error("need at least 2 values to aggregate")]
    TooFewValues,

    #[error("id mismatch: {0}")]
    IdMismatch(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap an error with the refinement iteration it occurred in.
    pub fn at_iteration(self, iteration: usize) -> Error {
        Error::Iteration {
            iteration,
            source: Box::new(self),
        }
    }
}
