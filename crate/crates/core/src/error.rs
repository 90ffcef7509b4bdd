use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid box [{x_min}, {y_min}, {x_max}, {y_max}]: {reason}")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
        reason: &'static str,
    },

    #[error("unusable prompt: {0}")]
    EmptyPrompt(String),

    #[error("invalid token table: {0}")]
    TokenTable(String),

    #[error("image {image_id}: {detail}")]
    Alignment { image_id: String, detail: String },

    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("duplicate class name {0:?}")]
    DuplicateClass(String),

    #[error("prediction {index} for image {image_id} has no confidence")]
    MissingConfidence { image_id: String, index: usize },

    #[error("predictions reference unknown images: {}", .0.join(", "))]
    OrphanPredictions(Vec<String>),

    #[error("invalid split spec: {0}")]
    SplitSpec(String),

    #[error("{path}:{line}: {field}: {reason}")]
    Schema {
        path: String,
        line: usize,
        field: String,
        reason: String,
    },

    #[error("io error on {path}: {reason}")]
    Io { path: String, reason: String },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            reason: err.to_string(),
        }
    }
}
