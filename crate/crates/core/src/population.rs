//! The population PLS algorithm in covariance form, with its automatic stop.
//!
//! Every quantity is a deterministic function of (Sigma_xx, sigma_xy): the
//! weight/score/loading recursion is propagated by deflating the covariance
//! matrix and the x–y covariance vector, never by sampling.

use nalgebra::{DMatrix, DVector};

use crate::error::PlsError;
use crate::linalg::{quad_form, sigma_orthonormalize};
use crate::model::{beta_true, krylov_basis, FullParameter};

/// Stop when ||w_(j+1)|| falls below this fraction of ||w_1||.
pub const STOP_REL_TOL: f64 = 1e-9;

const DEGENERATE_REL_TOL: f64 = 1e-12;

/// Options for the covariance-form recursion.
#[derive(Debug, Clone, Copy)]
pub struct PlsOptions {
    /// Relative stop threshold on the next weight norm; zero disables the
    /// automatic stop (the sample algorithm runs a fixed number of steps).
    pub stop_rel_tol: f64,
}

impl Default for PlsOptions {
    fn default() -> Self {
        Self {
            stop_rel_tol: STOP_REL_TOL,
        }
    }
}

/// Per-step history of the recursion.
#[derive(Debug, Clone)]
pub struct PopulationPlsState {
    /// w_j = cov(e_(j-1), f_(j-1)).
    pub weights: Vec<DVector<f64>>,
    /// p_j = cov(e_(j-1), t_j) / var(t_j).
    pub loadings: Vec<DVector<f64>>,
    /// q_j = cov(f_(j-1), t_j) / var(t_j).
    pub y_loadings: Vec<f64>,
    /// var(t_j).
    pub score_variances: Vec<f64>,
    /// var(f_j) for j = 0..=stop_step; non-increasing.
    pub residual_y_variances: Vec<f64>,
    /// cov(e_j, f_j) after the last completed step.
    pub residual_xy_cov: DVector<f64>,
    /// cov(e_j) after the last completed step.
    pub residual_xx_cov: DMatrix<f64>,
}

/// Result of running the population algorithm.
#[derive(Debug, Clone)]
pub struct PopulationPlsRun {
    pub state: PopulationPlsState,
    /// Accumulated coefficient vector: y is predicted by beta_pls' x.
    pub beta_pls: DVector<f64>,
    /// Number of completed steps.
    pub stop_step: usize,
    /// ||w_1||.
    pub w1_norm: f64,
    /// ||w_(stop_step + 1)||, the weight that triggered the stop (or would
    /// start the next step when the step cap was hit).
    pub next_weight_norm: f64,
}

pub(crate) struct CovRecursion {
    pub beta: DVector<f64>,
    pub steps: usize,
    pub w1_norm: f64,
    pub next_weight_norm: f64,
    pub state: PopulationPlsState,
}

/// Core recursion on a covariance pair (S, s). `var_y` seeds the residual
/// y-variance history. Works for any positive-semidefinite S as long as each
/// taken step has positive score variance.
pub(crate) fn covariance_recursion(
    sigma: &DMatrix<f64>,
    sigma_xy: &DVector<f64>,
    var_y: f64,
    max_steps: usize,
    opts: PlsOptions,
) -> Result<CovRecursion, PlsError> {
    let p = sigma.nrows();
    let scale = sigma
        .diagonal()
        .iter()
        .fold(0.0f64, |a, &x| a.max(x.abs()))
        .max(1e-300);
    let mut s_mat = sigma.clone();
    let mut s_vec = sigma_xy.clone();
    let mut x_map = DMatrix::<f64>::identity(p, p); // e_j = x_map * x
    let mut beta = DVector::<f64>::zeros(p);
    let w1_norm = sigma_xy.norm();
    let mut state = PopulationPlsState {
        weights: Vec::new(),
        loadings: Vec::new(),
        y_loadings: Vec::new(),
        score_variances: Vec::new(),
        residual_y_variances: vec![var_y],
        residual_xy_cov: s_vec.clone(),
        residual_xx_cov: s_mat.clone(),
    };
    let mut steps = 0;
    for j in 1..=max_steps {
        let w = s_vec.clone();
        let w_norm = w.norm();
        if j > 1 && w_norm <= opts.stop_rel_tol * w1_norm {
            break;
        }
        let c = &s_mat * &w;
        let var_t = w.dot(&c);
        if !(var_t > DEGENERATE_REL_TOL * w.norm_squared() * scale) {
            return Err(PlsError::DegenerateScore { step: j });
        }
        let loading = &c / var_t;
        let q = w.norm_squared() / var_t;
        beta += q * (x_map.transpose() * &w);
        x_map = (DMatrix::<f64>::identity(p, p) - &loading * w.transpose()) * &x_map;
        s_mat -= &c * c.transpose() / var_t;
        s_vec = &w - q * &c;
        let var_f = state.residual_y_variances.last().unwrap() - q * q * var_t;
        state.residual_y_variances.push(var_f.max(0.0));
        state.weights.push(w);
        state.loadings.push(loading);
        state.y_loadings.push(q);
        state.score_variances.push(var_t);
        steps = j;
    }
    state.residual_xy_cov = s_vec.clone();
    state.residual_xx_cov = s_mat;
    Ok(CovRecursion {
        beta,
        steps,
        w1_norm,
        next_weight_norm: s_vec.norm(),
        state,
    })
}

/// Run population PLS on the full parameter for at most `max_steps` steps.
///
/// Stops automatically when the next weight vector vanishes relative to the
/// first one; under the m-component hypothesis that happens at exactly m
/// steps with beta_pls equal to the true regression vector.
pub fn run_population_pls(
    phi: &FullParameter,
    max_steps: usize,
) -> Result<PopulationPlsRun, PlsError> {
    run_population_pls_with(phi, max_steps, PlsOptions::default())
}

pub fn run_population_pls_with(
    phi: &FullParameter,
    max_steps: usize,
    opts: PlsOptions,
) -> Result<PopulationPlsRun, PlsError> {
    if max_steps > phi.p() {
        return Err(PlsError::DimensionMismatch {
            expected: phi.p(),
            got: max_steps,
        });
    }
    let rec = covariance_recursion(phi.sigma_xx(), phi.sigma_xy(), phi.var_y(), max_steps, opts)?;
    Ok(PopulationPlsRun {
        beta_pls: rec.beta,
        stop_step: rec.steps,
        w1_norm: rec.w1_norm,
        next_weight_norm: rec.next_weight_norm,
        state: rec.state,
    })
}

/// True iff the population PLS coefficient vector equals the projection of
/// beta onto the span of the first m Krylov vectors in the Sigma_xx inner
/// product, within 1e-7 relative; m is the automatic stopping step.
pub fn verify_krylov_equivalence(phi: &FullParameter) -> Result<bool, PlsError> {
    if phi.sigma_xy().norm() == 0.0 {
        return Ok(true); // both sides are the zero vector
    }
    let run = run_population_pls(phi, phi.p())?;
    let m = run.stop_step;
    let krylov = krylov_basis(phi, m);
    let Some((basis, _)) = sigma_orthonormalize(krylov.vectors(), phi.sigma_xx()) else {
        return Ok(false);
    };
    // projection of beta: sum_k (b_k' Sigma beta) b_k = sum_k (b_k' sigma_xy) b_k
    let mut proj = DVector::<f64>::zeros(phi.p());
    for b in &basis {
        proj += b.dot(phi.sigma_xy()) * b;
    }
    let beta = beta_true(phi)?;
    let tol = 1e-7 * beta.norm().max(1.0);
    Ok((run.beta_pls - proj).norm() <= tol)
}

/// Residual variance of y after each step; kept for the monotone-fit check.
pub fn residual_y_variances(run: &PopulationPlsRun) -> &[f64] {
    &run.state.residual_y_variances
}

#[allow(dead_code)]
pub(crate) fn score_variance(sigma: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    quad_form(w, sigma, w)
}
