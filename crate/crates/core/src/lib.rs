//! Linear-prediction model reduction toolkit.
//!
//! The crate implements the population and sample versions of partial least
//! squares (PLS) regression together with the machinery needed to compare the
//! PLS model reduction against arbitrary rival reductions and estimators:
//!
//! * [`model`] — the full second-moment parameter (x-covariance, x–y
//!   covariance, residual variance), its spectral and Krylov structure, the
//!   PLS reduction and rival reductions expressed on the eigenbasis.
//! * [`groups`] — orthogonal-rotation/scale group actions on parameters and
//!   reductions, with the orbit invariant they preserve.
//! * [`population`] — the covariance-form PLS recursion with its automatic
//!   stopping rule.
//! * [`sample`] — the data-based PLS estimator in NIPALS and Krylov form,
//!   plus the skew projection used to decompose arbitrary estimators.
//! * [`optimality`] — exact mean-square-prediction-error decompositions and
//!   executable optimality criteria.
//! * [`estimators`] — OLS, ridge and principal-component rivals.
//! * [`simulation`] — seeded population/dataset generators and Monte Carlo
//!   MSEP experiments.
//! * [`born`] — density operators and trace-rule expectations, including the
//!   non-informative-state identity that recovers the variance criterion.

pub mod born;
pub mod error;
pub mod estimators;
pub mod groups;
mod linalg;
pub mod model;
pub mod optimality;
pub mod population;
pub mod sample;
pub mod simulation;

pub use error::{
    BornError, DataError, EstimatorError, GroupError, ModelError, PlsError, PriorError, SimError,
};
pub use model::{
    beta_of_eta, beta_of_theta, beta_true, krylov_basis, reduce_to_theta,
    relevant_component_count, AlternativeReduction, FullParameter, KrylovBasis, ReducedParameter,
    SpectralDecomposition,
};
