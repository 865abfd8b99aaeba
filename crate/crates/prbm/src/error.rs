use thiserror::Error;

#[derive(Debug, Error)]
pub enum PrbmError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("mesh too coarse: {0}")]
    MeshTooCoarse(String),
    #[error("numeric overflow: {0}")]
    NumericOverflow(String),
    #[error("slow convergence: {0}")]
    SlowConvergence(String),
    #[error("series truncation too coarse: tail bound {tail:e} after {terms} terms")]
    TruncationTooCoarse { terms: usize, tail: f64 },
    #[error("spreading kernel is singular on the diagonal (|theta - theta'| = {0:e})")]
    DiagonalSingularity(f64),
    #[error("Z_cell(0) is required to form the spectroscopic impedance")]
    MissingCellImpedance,
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("solve failure: {0}")]
    SolveFailure(String),
    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),
    #[error("perimeter {perimeter} does not exceed Lambda = {lambda}")]
    PerimeterTooSmall { perimeter: f64, lambda: f64 },
    #[error("censored fraction {fraction} exceeds ceiling {ceiling}")]
    TooManyCensored { fraction: f64, ceiling: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PrbmError>;

pub(crate) fn invalid(msg: impl Into<String>) -> PrbmError {
    PrbmError::InvalidParam(msg.into())
}
