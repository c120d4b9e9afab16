//! Error types, one enum per subsystem.

use thiserror::Error;

/// Errors from constructing or querying the full parameter and reductions.
#[derive(Debug, Clone, Error)]
pub enum ModelError {
    #[error("matrix is not symmetric within tolerance (max asymmetry {max_asym:e})")]
    NotSymmetric { max_asym: f64 },
    #[error("covariance matrix is not positive definite (min eigenvalue {min_eig:e})")]
    NonPositiveDefinite { min_eig: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Errors from group elements and group actions.
#[derive(Debug, Clone, Error)]
pub enum GroupError {
    #[error("invalid group element: {0}")]
    InvalidGroupElement(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Errors from the population and sample PLS algorithms.
#[derive(Debug, Clone, Error)]
pub enum PlsError {
    #[error("degenerate score variance at step {step} (zero x–y covariance or rank-deficient step)")]
    DegenerateScore { step: usize },
    #[error("Krylov block has numerical rank {rank}, below the requested {requested} components")]
    RankDeficientKrylov { rank: usize, requested: usize },
    #[error("Gram matrix of the Krylov block is numerically singular")]
    SingularGram,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("NIPALS and Krylov-projection coefficient vectors disagree beyond tolerance ({diff:e})")]
    RepresentationMismatch { diff: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Errors from priors and criterion evaluation.
#[derive(Debug, Clone, Error)]
pub enum PriorError {
    #[error("unsupported prior: {0}")]
    UnsupportedPrior(String),
    #[error("criterion needs at least {need} replicates, got {got}")]
    InsufficientReplicates { got: usize, need: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Errors from competitor estimators.
#[derive(Debug, Clone, Error)]
pub enum EstimatorError {
    #[error("design matrix is numerically singular; OLS is not defined")]
    SingularDesign,
    #[error("invalid estimator spec `{0}` (expected ols | ridge:<k> | pcr:<c> | pls:<a>)")]
    InvalidSpec(String),
    #[error("component count {got} out of range 1..={max}")]
    InvalidComponentCount { got: usize, max: usize },
    #[error(transparent)]
    Pls(#[from] PlsError),
}

/// Errors from experiment specification and execution.
#[derive(Debug, Clone, Error)]
pub enum SimError {
    #[error("invalid design spec: {0}")]
    InvalidSpec(String),
    #[error("estimator `{estimator}` was skipped on {skipped}/{replicates} replicates (> 5% skip policy)")]
    TooManySkips {
        estimator: String,
        skipped: usize,
        replicates: usize,
    },
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Pls(#[from] PlsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Errors from the operator/density-matrix module.
#[derive(Debug, Clone, Error)]
pub enum BornError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input operator is not Hermitian within tolerance")]
    NonHermitianInput,
    #[error("eigenvector matrix is not unitary within tolerance")]
    NotOrthonormal,
    #[error("not a density operator: {0}")]
    NotDensityOperator(String),
    #[error("scalar function undefined at eigenvalue {0}")]
    UndefinedAtEigenvalue(f64),
    #[error("grid size {0} too small (need >= 8)")]
    InvalidGrid(usize),
    #[error(transparent)]
    Prior(#[from] PriorError),
}

/// Errors from dataset construction and CSV loading.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("dataset needs at least 1 predictor column and a response column")]
    TooFewColumns,
    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("ragged csv: row {row} has {got} fields, expected {expected}")]
    Ragged {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("csv parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
