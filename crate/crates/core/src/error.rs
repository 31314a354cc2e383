use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("malformed kinematic tree: {0}")]
    MalformedTree(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error(
        "insufficient hypotheses: {ground_truths} ground truths but only {predictions} predictions"
    )]
    InsufficientHypotheses {
        ground_truths: usize,
        predictions: usize,
    },
    #[error("degenerate point configuration: {0}")]
    Degenerate(String),
    #[error("no valid points")]
    NoValidPoints,
    #[error("infeasible layout: {0}")]
    InfeasibleLayout(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
