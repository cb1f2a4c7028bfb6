use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("collision configuration: mutual distance {distance:e} below floor {floor:e}")]
    Collision { distance: f64, floor: f64 },

    #[error("no convergence: {0}")]
    NonConvergence(String),

    /// A hypothesis of the index theory ([BS], BND, hyperbolicity) fails.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
