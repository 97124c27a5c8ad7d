use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("generation diverged at step {step}: {reason}")]
    Generation { step: usize, reason: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{0}")]
    NotFound(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("return map has no fixed point (slope {slope})")]
    NoFixedPoint { slope: f64 },

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
