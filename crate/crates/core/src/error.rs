use thiserror::Error;

pub type Result<T> = std::result::Result<T, CfxError>;

#[derive(Debug, Error)]
pub enum CfxError {
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("no warping path within band {band} for lengths {len_a} and {len_b}")]
    Band {
        band: usize,
        len_a: usize,
        len_b: usize,
    },

    #[error("training failed at epoch {epoch}: {message}")]
    Train { epoch: usize, message: String },

    #[error("capability error: {0}")]
    Capability(String),

    #[error("no training instance of class {class} available")]
    NoNeighbor { class: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("metric unavailable: {0}")]
    MetricUnavailable(String),

    #[error("model file error: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CfxError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        CfxError::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        CfxError::Shape {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
