use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("rank-1 update is singular: 1 + v'A^-1 u = {denominator:e}")]
    SingularUpdate { denominator: f64 },

    #[error("eigendecomposition did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("iteration bound exceeded: {iterations} iterations, bound {bound:.3}")]
    IterationCapExceeded { iterations: usize, bound: f64 },

    #[error("finite-difference probe left the domain (tau = {tau:e})")]
    InfeasibleProbe { tau: f64 },

    #[error("point is not strictly feasible")]
    Infeasible,

    #[error("local norm {norm} is not below 1")]
    NormTooLarge { norm: f64 },

    #[error("starting point is not centered: {centrality:e} > {threshold:e}")]
    NotCentered { centrality: f64, threshold: f64 },

    #[error("inner loop stalled after {iterations} iterations")]
    InnerLoopStall { iterations: usize },

    #[error("centering made no progress after {iterations} iterations")]
    NoProgress { iterations: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("entry at line {line} is below the diagonal")]
    NonSymmetricEntry { line: usize },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
