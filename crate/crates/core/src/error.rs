use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point is behind the camera (depth {0:.3e} m)")]
    BehindCamera(f64),
    #[error("curve needs at least 2 points, got {0}")]
    EmptyCurve(usize),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("arc midpoint coincides with the nozzle")]
    ZeroMidpoint,
    #[error("invalid arc: {0}")]
    InvalidArc(String),
    #[error("point lies {0:.3e} m off the center curve")]
    OffCurve(f64),
    #[error("width samples rejected: {0}")]
    InvalidWidthSamples(String),
    #[error("Gram matrix is singular after maximum jitter")]
    SingularGram,
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("silhouette is empty")]
    EmptySilhouette,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("insufficient surface points: recovered {0}, need at least 3")]
    InsufficientPoints(usize),
    #[error("no frames in group '{0}'")]
    EmptyGroup(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
