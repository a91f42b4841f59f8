use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is not symmetric: relative asymmetry {asymmetry:e} exceeds {tolerance:e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("Jacobi eigensolver did not converge for {dim}x{dim} matrix after {sweeps} sweeps (off-diagonal mass {off_diagonal:e})")]
    EigenNonConvergence {
        dim: usize,
        sweeps: usize,
        off_diagonal: f64,
    },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite loss at h={h:e}, |theta|={theta_norm:e}, |v|={direction_norm:e}")]
    NonFiniteLoss {
        h: f64,
        theta_norm: f64,
        direction_norm: f64,
    },

    #[error("iterate diverged at step {step}: |theta| = {norm:e}")]
    Diverged { step: u64, norm: f64 },

    #[error("degenerate scaling: w'Vw = {0:e}")]
    DegenerateScaling(f64),

    #[error("confidence level {0} is not in the critical-value table")]
    UnsupportedLevel(f64),

    #[error("scaling update out of order: expected index {expected}, got {got}")]
    OutOfOrder { expected: u64, got: u64 },

    #[error("negative variance {0:e} in quadratic form")]
    NegativeVariance(f64),

    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("duplicate run id {0:?}")]
    DuplicateRunId(String),

    #[error("unknown recipe {0:?}")]
    UnknownRecipe(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("malformed CSV at line {line}: {message}")]
    Csv { line: u64, message: String },
}
