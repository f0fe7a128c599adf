//! Scenario-driven benchmark harness for the GP trajectory planner: parse
//! scenario files, run single plans, closed-loop replays, and sweeps, and
//! export trajectories, rasters, and reports for plotting.

pub mod error;
pub mod output;
pub mod replay;
pub mod runner;
pub mod scenario;

pub use error::BenchError;

pub type Result<T> = std::result::Result<T, BenchError>;
