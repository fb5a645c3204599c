use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),

    #[error("non-finite gradient at particle {particle}")]
    NonFiniteGradient { particle: usize },

    #[error("non-finite field value at particle {particle}")]
    NonFiniteField { particle: usize },

    #[error("particle {particle} left the finite domain")]
    Diverged { particle: usize },

    #[error(
        "linear solve failed: {0}; increase the diagonal regularization or jitter duplicate particles"
    )]
    SingularSystem(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("configuration invalid:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
