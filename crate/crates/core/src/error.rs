use thiserror::Error;

/// Errors raised across the reduced-order modelling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("rank deficiency at greedy step {step}: {detail}")]
    RankDeficient { step: usize, detail: String },

    #[error("numerical divergence at t = {time}: {detail}")]
    Divergence { time: f64, detail: String },

    #[error("classification failure: {0}")]
    Classification(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Degenerate(_)
                | Error::RankDeficient { .. }
                | Error::Divergence { .. }
                | Error::Classification(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
