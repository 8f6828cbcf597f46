use std::path::PathBuf;

/// Errors produced by field I/O, model assembly, factorization, estimation
/// and calibration.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("input file not found: {0}")]
    MissingInput(PathBuf),

    #[error("malformed header: {0}")]
    Format(String),

    #[error("payload length mismatch: expected {expected} values, got {got}")]
    Truncated { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate nodes (zero ensemble standard deviation) at indices {0:?}")]
    DegenerateNodes(Vec<usize>),

    #[error("window out of bounds: center ({i}, {j}) needs half-width {half}")]
    WindowOutOfBounds { i: usize, j: usize, half: usize },

    #[error("factorization failed at pivot {pivot} (value {value:.6e}): matrix not positive definite")]
    Factorization { pivot: usize, value: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, Error>;
