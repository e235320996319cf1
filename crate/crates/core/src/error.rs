use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singular matrix: zero pivot at row {row}")]
    Singular { row: usize },

    #[error("unsupported bit width {bits} (the uniform quantizer needs at least 2 bits)")]
    UnsupportedBits { bits: u32 },

    #[error("invalid scale {0}: must be finite and positive")]
    InvalidScale(f64),

    #[error("out-of-order streaming step: state is at t={expected}, got t={got}")]
    Sequencing { expected: usize, got: usize },

    #[error("timestep {t} out of range for T={t_steps}")]
    Range { t: usize, t_steps: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("label {label} at sample {index} is out of range for {classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("missing forward cache: {0}")]
    MissingCache(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }
}
