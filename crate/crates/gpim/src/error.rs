use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?} ({context})")]
    Shape {
        expected: Vec<usize>,
        got: Vec<usize>,
        context: String,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("config error: {0}")]
    ConfigGeneral(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("state is not labelable as a goal")]
    Unlabelable,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(expected: &[usize], got: &[usize], context: impl Into<String>) -> Self {
        Error::Shape {
            expected: expected.to_vec(),
            got: got.to_vec(),
            context: context.into(),
        }
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
