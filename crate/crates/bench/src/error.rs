use thiserror::Error;

/// Harness failures, grouped by the CLI exit code they map to.
#[derive(Debug, Error)]
pub enum BenchError {
    /// Scenario, manifest, or map content problems (exit code 2).
    #[error("{0}")]
    Parse(String),
    /// Optimizer failures (exit code 3).
    #[error("{0}")]
    Solve(String),
    /// Filesystem problems (exit code 4).
    #[error("{0}")]
    Io(String),
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Parse(_) => 2,
            BenchError::Solve(_) => 3,
            BenchError::Io(_) => 4,
        }
    }
}

/// Map a core library error raised while interpreting scenario content.
pub fn parse_err(context: &str, e: impl std::fmt::Display) -> BenchError {
    BenchError::Parse(format!("{context}: {e}"))
}

pub fn io_err(context: &str, e: impl std::fmt::Display) -> BenchError {
    BenchError::Io(format!("{context}: {e}"))
}

pub fn solve_err(context: &str, e: impl std::fmt::Display) -> BenchError {
    BenchError::Solve(format!("{context}: {e}"))
}
