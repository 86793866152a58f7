use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },
    #[error("unknown problem id `{id}`; available: {}", available.join(", "))]
    UnknownProblem { id: String, available: Vec<String> },
    #[error("closed-form augmented Lagrangian unavailable: {0}")]
    ClosedFormUnavailable(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("missing derivative: {0}")]
    MissingDerivative(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("strict complementarity violated (required for the generalized second-order test): {0}")]
    StrictComplementarity(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context: context.to_string(),
            expected,
            got,
        });
    }
    Ok(())
}
