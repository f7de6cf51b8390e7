//! Crate-wide error type.
//!
//! Every fallible operation in this crate returns [`TomoResult`]. Variants
//! are grouped by pipeline stage; the message carries enough numeric context
//! (dimensions, condition numbers, residuals) to diagnose a failure from a
//! log line alone.

use thiserror::Error;

/// Errors produced by state construction, spectral analysis, fitting and I/O.
#[derive(Debug, Error)]
pub enum TomoError {
    /// Matrix dimensions do not satisfy an operation's contract.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The two leading transfer-matrix eigenvalues are too close to define a
    /// unique dominant direction.
    #[error(
        "degenerate dominant eigenvalue: Re gap {gap:.3e} below threshold {threshold:.3e}; \
         the stationary subspace is not one-dimensional"
    )]
    DegenerateSpectrum { gap: f64, threshold: f64 },

    /// The eigenvector matrix of the transfer matrix is numerically singular,
    /// so the diagonal-basis representation is unreliable.
    #[error(
        "eigenvector basis is ill-conditioned (cond = {cond:.3e} > {limit:.3e}); \
         use the direct matrix-exponential correlator evaluator instead"
    )]
    IllConditionedBasis { cond: f64, limit: f64 },

    /// A principal matrix square root does not exist because an eigenvalue
    /// lies on the negative real axis.
    #[error(
        "no principal square root: eigenvalue {eigenvalue} lies on the negative real axis"
    )]
    NoPrincipalRoot { eigenvalue: num_complex::Complex<f64> },

    /// The field operator R is singular (or nearly so), so R^(-1/2) and the
    /// diagonal-basis residue representation are undefined.
    #[error("field operator R is numerically singular (smallest |eigenvalue| = {smallest:.3e})")]
    SingularR { smallest: f64 },

    /// An operation that requires a normalised state received one whose
    /// dominant transfer eigenvalue is far from zero.
    #[error(
        "state is not normalised: dominant transfer eigenvalue has Re = {re_lambda1:.3e} \
         (|Re| must be <= {tolerance:.1e}); call normalize() first"
    )]
    UnnormalizedState { re_lambda1: f64, tolerance: f64 },

    /// The requested number of exponential modes exceeds the numerical rank
    /// of the sample data.
    #[error(
        "requested {requested} exponential modes but data supports only {detected_rank} \
         (singular-value ratio below {threshold:.1e})"
    )]
    OrderTooHigh {
        requested: usize,
        detected_rank: usize,
        threshold: f64,
    },

    /// An initial model handed to the constrained refiner violates the
    /// feasibility constraints (decay rates must be non-positive, complex
    /// modes must come in conjugate pairs).
    #[error("constraint-infeasible initial model: {0}")]
    ConstraintInfeasible(String),

    /// A correlator was requested at non-monotone positions.
    #[error("positions must be non-decreasing: gap {index} is {gap:.6e} < 0")]
    NegativeGap { index: usize, gap: f64 },

    /// Odd-order phase correlators are requested but cannot be measured:
    /// each experimental shot carries an unknown global phase offset which
    /// only cancels from phase differences, i.e. from even-order moments.
    #[error(
        "odd order {order} is unavailable: the per-shot global phase offset cancels \
         only in even-order phase-difference moments"
    )]
    OddOrderUnavailable { order: usize },

    /// Correlation orders above this implementation's supported maximum.
    #[error("order {order} exceeds the supported maximum of {max}")]
    OrderTooLarge { order: usize, max: usize },

    /// Random-state generation failed to produce an admissible sample within
    /// the retry budget.
    #[error(
        "rejection sampling exhausted its budget of {budget} draws \
         (constraints: {constraints})"
    )]
    RejectionBudgetExhausted { budget: usize, constraints: String },

    /// Two data sets that must share a grid (or an operation and its input
    /// grid) disagree.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A user-supplied phase covariance matrix has a significantly negative
    /// eigenvalue, so no Gaussian field realises it.
    #[error(
        "covariance matrix is not positive semidefinite (smallest eigenvalue {min_eig:.3e})"
    )]
    CovarianceNotPsd { min_eig: f64 },

    /// An iterative numerical routine failed to converge.
    #[error("{routine} failed to converge: {detail}")]
    ConvergenceFailure { routine: String, detail: String },

    /// Malformed input data (CSV/JSON structure, headers, field counts).
    #[error("parse error in {context}: {detail}")]
    Parse { context: String, detail: String },

    /// Underlying I/O failure.
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialisation failure.
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type TomoResult<T> = Result<T, TomoError>;
