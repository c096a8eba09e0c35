use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid mismatch: field belongs to grid {found:#x}, expected {expected:#x}")]
    GridMismatch { expected: u64, found: u64 },

    #[error("length mismatch for {what}: expected {expected}, got {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("state lives in the {found} space but the flow expects the {expected} space")]
    SpaceMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e}, tolerance {tolerance:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("theoretical constants unavailable: {0}")]
    ConstantsUnavailable(String),

    #[error("empty point cloud")]
    EmptyCloud,
}

pub type Result<T> = std::result::Result<T, Error>;
