use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("{path}: row {row} has {found} columns, expected {expected}")]
    RaggedRow {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}: cannot parse {value:?} at row {row}, column {column} as a real number")]
    BadCell {
        path: PathBuf,
        row: usize,
        column: usize,
        value: String,
    },

    #[error("label column {0:?} not found")]
    MissingLabelColumn(String),

    #[error("label column holds a single distinct value ({0:?}); nothing to classify")]
    SingleLabel(String),

    #[error("dataset {name}: {message}")]
    InvalidDataset { name: String, message: String },

    #[error("class {label} has {count} rows; need at least {needed} to stratify")]
    ClassTooSmall {
        label: u8,
        count: usize,
        needed: usize,
    },

    #[error("minority class ({minority}) is larger than majority class ({majority}); check positive_label")]
    MinorityLarger { minority: usize, majority: usize },

    #[error("shape mismatch in {context}: expected {expected}, got {found}")]
    Shape {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("activation cache does not match the model ({0})")]
    StaleCache(&'static str),

    #[error("need at least {needed} rows, got {found} ({context})")]
    TooFewRows {
        context: &'static str,
        needed: usize,
        found: usize,
    },

    #[error("non-finite {what} loss at epoch {epoch}")]
    NonFiniteLoss { what: &'static str, epoch: usize },

    #[error("{what} loss stayed below {floor:e} for {epochs} consecutive epochs (ending at epoch {epoch})")]
    CollapsedLoss {
        what: &'static str,
        floor: f64,
        epochs: usize,
        epoch: usize,
    },

    #[error("filter accepted {accepted} of {wanted} samples within the draw budget of {budget}")]
    DrawBudgetExhausted {
        wanted: usize,
        accepted: usize,
        budget: usize,
    },

    #[error("unknown oversampling method {0:?}")]
    UnknownArm(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
