use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value produced in {0}")]
    NonFinite(String),

    #[error("integration produced a non-finite field value at step {step}")]
    Integration { step: usize },

    #[error("class {class} has no latents in the bank")]
    ClassCoverage { class: usize },

    #[error("class index {label} out of range for {n_classes} classes")]
    LabelRange { label: usize, n_classes: usize },

    #[error("malformed input at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("AUC undefined: {0}")]
    UndefinedAuc(&'static str),

    #[error("blend coefficient undefined: source and target centers coincide")]
    UndefinedAlpha,

    #[error("image has no foreground pixels")]
    EmptyGlyph,

    #[error("relative error undefined for a zero reference value")]
    ZeroReference,

    #[error("operation not supported by this oracle: {0}")]
    Unsupported(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("run is not awaiting a label")]
    NotAwaitingLabel,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
