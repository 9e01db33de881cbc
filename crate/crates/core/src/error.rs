//! Error type shared by every module of the crate.

/// Errors produced by construction, evaluation and solver routines.
///
/// Numerical contracts that fail *despite* their preconditions holding are
/// reported as [`Error::ContractViolation`]; they indicate either an input far
/// outside the supported regime or a bug, and tests treat them as hard
/// failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix is not symmetric: |a[({i},{j})] - a[({j},{i})]| = {diff:.3e} exceeds tolerance {tol:.3e}")]
    NotSymmetric { i: usize, j: usize, diff: f64, tol: f64 },

    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("eigendecomposition failed reconstruction check: residual {residual:.3e} > {tol:.3e}")]
    EigenReconstruction { residual: f64, tol: f64 },

    #[error("spectral measure is empty or carries no weight")]
    EmptyMeasure,

    #[error("spectral measure atoms must be strictly decreasing: atom {index} repeats or increases")]
    UnsortedMeasure { index: usize },

    #[error("head/tail split invalid: {reason}")]
    InvalidSplit { reason: String },

    #[error("iteration {n} out of range: valid range is 1..={max}")]
    IterationOutOfRange { n: usize, max: usize },

    #[error("iteration {n} is not well defined: the order-{n} Jacobi section has an eigenvalue {value:.6e} at or below zero")]
    IterationNotWellDefined { n: usize, value: f64 },

    #[error("normalized minimal polynomial undefined: value at zero is {value:.3e}, numerically zero against scale {scale:.3e}")]
    XiUndefined { value: f64, scale: f64 },

    #[error("coupling system is numerically singular at iteration {n}")]
    SingularSigmaSystem { n: usize },

    #[error("coupling norm too large for iterate comparison: |sigma|_1 = {sigma_l1:.6e} >= 1")]
    SigmaTooLarge { sigma_l1: f64 },

    #[error("conjugate gradient breakdown at iteration {iteration}: {reason}")]
    CgBreakdown { iteration: usize, reason: String },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("numerical contract violated: {0}")]
    ContractViolation(String),

    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
