use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no conservative input exists: {0}")]
    Infeasible(String),

    #[error("unrecoverable safety failure at run {run}, episode {episode}, step {step}: {reason}")]
    UnrecoverableSafety {
        run: usize,
        episode: usize,
        step: usize,
        reason: String,
    },

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("unbounded linear program")]
    Unbounded,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("configuration parse error: {0}")]
    ConfigParse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(context: &'static str, expected: impl ToString, actual: impl ToString) -> Result<T> {
    Err(Error::Shape {
        context,
        expected: expected.to_string(),
        actual: actual.to_string(),
    })
}
