use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vehicle off road at ({x:.3}, {y:.3})")]
    OffRoad { x: f64, y: f64 },
    #[error("coverage disc intersects no road")]
    NoRoadInDisc,
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("illegal action reached execution: {0}")]
    IllegalAction(String),
    #[error("non-finite gradient in {0}")]
    NonFinite(String),
    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("search space of {plans} plans exceeds bound {bound}; use a smaller scenario")]
    SearchTooLarge { plans: f64, bound: f64 },
    #[error("replay buffer holds {have} experiences, batch needs {need}")]
    BufferTooSmall { have: usize, need: usize },
    #[error("checkpoint format: {0}")]
    Checkpoint(String),
    #[error("trace: {0}")]
    Trace(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
