use thiserror::Error;

/// Errors surfaced by the planner library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("time grid must contain at least two strictly increasing times starting at 0")]
    InvalidTimeGrid,
    #[error("time step must be positive (got {0})")]
    NonPositiveDt(f64),
    #[error("negative time step (got {0})")]
    NegativeDt(f64),
    #[error("nominal speed must be positive (got {0})")]
    NonPositiveSpeed(f64),
    #[error("interpolation time {tau} outside open segment ({t0}, {t1})")]
    TauOutsideSegment { tau: f64, t0: f64, t1: f64 },
    #[error("{what} must be symmetric positive definite")]
    NotPositiveDefinite { what: &'static str },
    #[error("{name} out of range: {msg}")]
    ParamRange { name: &'static str, msg: String },
    #[error("query point ({x}, {y}) outside grid bounds")]
    OutOfBounds { x: f64, y: f64 },
    #[error("grid dimensions must be at least 2x2 (got {width}x{height})")]
    GridTooSmall { width: usize, height: usize },
    #[error("map file {path}: {msg}")]
    MapFormat { path: String, msg: String },
    #[error("map file {path}: io: {source}")]
    MapIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("damped normal equations not positive definite at block {block}")]
    SingularSystem { block: usize },
    #[error("trajectory has {states} states but the graph expects {expected}")]
    StateCountMismatch { states: usize, expected: usize },
}
