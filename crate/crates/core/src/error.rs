use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("shape error at layer {layer}: {message}")]
    Shape { layer: usize, message: String },

    #[error("size error: expected {expected} bytes, got {actual}")]
    Size { expected: usize, actual: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("capacity error at layer {layer}: {message}")]
    Capacity { layer: usize, message: String },

    #[error("bank conflict: {writes} writes target bank {bank} in one cycle")]
    BankConflict { bank: usize, writes: usize },

    #[error("accumulator overflow at layer {layer}: value {value} exceeds {bits}-bit range")]
    Overflow { layer: usize, value: i128, bits: u32 },

    #[error("no layer statistics to report")]
    EmptyStats,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(layer: usize, message: impl Into<String>) -> Self {
        Error::Shape {
            layer,
            message: message.into(),
        }
    }

    /// Bank conflicts and overflows can only come from a compiler or simulator
    /// bug once the inputs have been validated.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::BankConflict { .. } | Error::Overflow { .. })
    }
}
