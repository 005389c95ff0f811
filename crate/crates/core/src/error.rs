use thiserror::Error;

/// Every fallible operation in the crate reports through this type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("atom at {x} lies outside window [{lo}, {hi})")]
    AtomOutsideWindow { x: f64, lo: f64, hi: f64 },

    #[error("negative or non-finite density sample {value} at x = {x}")]
    NegativeDensity { x: f64, value: f64 },

    #[error("scale {scale} is below grid resolution {grid}")]
    BelowResolution { scale: f64, grid: f64 },

    #[error("scale {scale} is not a dyadic multiple of grid width {grid}")]
    NotDyadic { scale: f64, grid: f64 },

    #[error("restriction retains no mass")]
    EmptyRestriction,

    #[error("set is not uniform at block level {level}")]
    NotUniform { level: usize },

    #[error("H_s is empty at grid resolution from schedule index {k} (n = {n})")]
    EmptyHs { k: usize, n: u64 },

    #[error("comb violates the cosine floor: min cos(2 pi x / r) = {min}")]
    CosineFloor { min: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("no density level retains mass {needed}; retained per level {histogram:?}")]
    NoDensityLevel { needed: f64, histogram: Vec<f64> },

    #[error("requires n >= {required} measures, got {got}")]
    TooFewMeasures { required: usize, got: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
