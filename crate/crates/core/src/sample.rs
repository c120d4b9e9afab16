//! The data-based PLS estimator in NIPALS and Krylov form, and the skew
//! projection that decomposes an arbitrary estimator against the Krylov span.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{DataError, PlsError};
use crate::linalg::{
    normalized_column_rank, quad_form, sigma_orthonormalize, solve_upper_triangular, RANK_REL_TOL,
};
use crate::population::{covariance_recursion, PlsOptions};

/// Predictor matrix (n rows of p variables) and response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

/// Divisor for empirical covariances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovDivisor {
    #[default]
    NMinusOne,
    N,
}

impl CovDivisor {
    fn value(self, n: usize) -> f64 {
        match self {
            CovDivisor::NMinusOne => (n - 1) as f64,
            CovDivisor::N => n as f64,
        }
    }
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self, DataError> {
        let n = x.nrows();
        if n < 2 {
            return Err(DataError::TooFewRows(n));
        }
        if x.ncols() == 0 {
            return Err(DataError::TooFewColumns);
        }
        if y.len() != n {
            return Err(DataError::Ragged {
                row: 0,
                got: y.len(),
                expected: n,
            });
        }
        for (i, row) in x.row_iter().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonFinite { row: i, col: j });
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                row: i,
                col: x.ncols(),
            });
        }
        Ok(Self { x, y })
    }

    /// Load from CSV: the first p columns are predictors, the last column is
    /// the response. `has_header` skips the first row.
    pub fn from_csv(path: &Path, has_header: bool) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text, has_header)
    }

    pub fn from_csv_str(text: &str, has_header: bool) -> Result<Self, DataError> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut width = None;
        for (idx, line) in text.lines().enumerate() {
            if idx == 0 && has_header {
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let w = *width.get_or_insert(fields.len());
            if fields.len() != w {
                return Err(DataError::Ragged {
                    row: idx,
                    got: fields.len(),
                    expected: w,
                });
            }
            let mut row = Vec::with_capacity(w);
            for f in fields {
                row.push(f.trim().parse::<f64>().map_err(|e| DataError::Parse {
                    row: idx,
                    message: format!("{e}: `{f}`"),
                })?);
            }
            rows.push(row);
        }
        let n = rows.len();
        let w = width.unwrap_or(0);
        if w < 2 {
            return Err(DataError::TooFewColumns);
        }
        let p = w - 1;
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        let y = DVector::from_fn(n, |i, _| rows[i][p]);
        Self::new(x, y)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }
}

/// Centered empirical second moments of a dataset.
#[derive(Debug, Clone)]
pub struct EmpiricalMoments {
    pub sigma_xx: DMatrix<f64>,
    pub sigma_xy: DVector<f64>,
    pub x_mean: DVector<f64>,
    pub y_mean: f64,
    pub var_y: f64,
}

pub fn empirical_moments(data: &Dataset, divisor: CovDivisor) -> EmpiricalMoments {
    let n = data.n();
    let p = data.p();
    let x_mean = DVector::from_fn(p, |j, _| data.x.column(j).mean());
    let y_mean = data.y.mean();
    let mut xc = data.x.clone();
    for j in 0..p {
        let m = x_mean[j];
        for i in 0..n {
            xc[(i, j)] -= m;
        }
    }
    let yc = data.y.map(|v| v - y_mean);
    let d = divisor.value(n);
    let sigma_xx = xc.transpose() * &xc / d;
    let sigma_xy = xc.transpose() * &yc / d;
    let var_y = yc.norm_squared() / d;
    EmpiricalMoments {
        sigma_xx,
        sigma_xy,
        x_mean,
        y_mean,
        var_y,
    }
}

/// The fitted a-component PLS estimator. Both representations are stored:
/// the coefficient vector itself and the Krylov expansion coefficients, which
/// reconstruct it as the sum of alpha_j e_j.
#[derive(Debug, Clone)]
pub struct PlsFit {
    pub a: usize,
    pub beta_hat: DVector<f64>,
    pub alpha_hat: DVector<f64>,
    pub e_hat: Vec<DVector<f64>>,
    pub x_mean: DVector<f64>,
    pub y_mean: f64,
}

impl PlsFit {
    /// y_mean + beta_hat . (x_new - x_mean).
    pub fn predict(&self, x_new: &DVector<f64>) -> Result<f64, PlsError> {
        if x_new.len() != self.beta_hat.len() {
            return Err(PlsError::DimensionMismatch {
                expected: self.beta_hat.len(),
                got: x_new.len(),
            });
        }
        Ok(self.y_mean + self.beta_hat.dot(&(x_new - &self.x_mean)))
    }

    /// The j-th Krylov term alpha_j e_j of the expansion (0-based).
    pub fn krylov_term(&self, j: usize) -> DVector<f64> {
        self.alpha_hat[j] * &self.e_hat[j]
    }
}

/// Fit the a-component PLS estimator with the default covariance divisor.
pub fn fit_pls(data: &Dataset, a: usize) -> Result<PlsFit, PlsError> {
    fit_pls_with(data, a, CovDivisor::default())
}

/// Centers the data, builds the empirical Krylov sequence, and projects onto
/// its span in the empirical covariance inner product. The same coefficient
/// vector is recomputed by the NIPALS deflation recursion as a cross-check;
/// the two routes must agree to 1e-6.
pub fn fit_pls_with(data: &Dataset, a: usize, divisor: CovDivisor) -> Result<PlsFit, PlsError> {
    let p = data.p();
    if a == 0 || a > p {
        return Err(PlsError::DimensionMismatch {
            expected: p,
            got: a,
        });
    }
    let mom = empirical_moments(data, divisor);
    let mut e_hat = Vec::with_capacity(a);
    let mut v = mom.sigma_xy.clone();
    for _ in 0..a {
        e_hat.push(v.clone());
        v = &mom.sigma_xx * &v;
    }
    let rank = normalized_column_rank(&e_hat);
    if rank < a {
        return Err(PlsError::RankDeficientKrylov { rank, requested: a });
    }
    let Some((basis, t)) = sigma_orthonormalize(&e_hat, &mom.sigma_xx) else {
        return Err(PlsError::RankDeficientKrylov { rank, requested: a });
    };
    // z_k = b_k' Sigma beta_ols = b_k' sigma_xy
    let z = DVector::from_fn(a, |k, _| basis[k].dot(&mom.sigma_xy));
    let mut beta_hat = DVector::<f64>::zeros(p);
    for k in 0..a {
        beta_hat += z[k] * &basis[k];
    }
    // alpha in the raw Krylov basis: T alpha_unit = z, then undo the column
    // normalization applied inside the orthogonalizer.
    let alpha_unit = solve_upper_triangular(&t, &z);
    let alpha_hat = DVector::from_fn(a, |k, _| alpha_unit[k] / e_hat[k].norm());

    let nipals = covariance_recursion(
        &mom.sigma_xx,
        &mom.sigma_xy,
        mom.var_y,
        a,
        PlsOptions { stop_rel_tol: 0.0 },
    )?;
    let diff = (&nipals.beta - &beta_hat).norm() / beta_hat.norm().max(1.0);
    if diff > 1e-6 {
        return Err(PlsError::RepresentationMismatch { diff });
    }
    Ok(PlsFit {
        a,
        beta_hat,
        alpha_hat,
        e_hat,
        x_mean: mom.x_mean,
        y_mean: mom.y_mean,
    })
}

/// Decompose `beta_any` against the span of the Krylov vectors by the skew
/// projection D (D' Sigma D)^-1 D' Sigma: returns the span coefficients and
/// the residual f with e_j' Sigma f = 0 for every j.
pub fn skew_project(
    beta_any: &DVector<f64>,
    krylov: &[DVector<f64>],
    sigma_xx: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>), PlsError> {
    let p = sigma_xx.nrows();
    if beta_any.len() != p {
        return Err(PlsError::DimensionMismatch {
            expected: p,
            got: beta_any.len(),
        });
    }
    for k in krylov {
        if k.len() != p {
            return Err(PlsError::DimensionMismatch {
                expected: p,
                got: k.len(),
            });
        }
    }
    let a = krylov.len();
    // condition gate on the Gram matrix of the unit-normalized block
    let mut unit = Vec::with_capacity(a);
    for k in krylov {
        let n = k.norm();
        if n == 0.0 {
            return Err(PlsError::SingularGram);
        }
        unit.push(k / n);
    }
    let mut gram = DMatrix::<f64>::zeros(a, a);
    for i in 0..a {
        for j in 0..a {
            gram[(i, j)] = quad_form(&unit[i], sigma_xx, &unit[j]);
        }
    }
    let sv = gram.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 0.0) || smax / smin >= 1e12 {
        return Err(PlsError::SingularGram);
    }
    let Some((basis, t)) = sigma_orthonormalize(krylov, sigma_xx) else {
        return Err(PlsError::SingularGram);
    };
    let z = DVector::from_fn(a, |k, _| quad_form(&basis[k], sigma_xx, beta_any));
    let mut proj = DVector::<f64>::zeros(p);
    for k in 0..a {
        proj += z[k] * &basis[k];
    }
    let coeff_unit = solve_upper_triangular(&t, &z);
    let coeffs = DVector::from_fn(a, |k, _| coeff_unit[k] / krylov[k].norm());
    let residual = beta_any - proj;
    Ok((coeffs, residual))
}

/// Numerical rank of the empirical Krylov block built from the dataset.
pub fn krylov_rank(data: &Dataset, max_a: usize, divisor: CovDivisor) -> usize {
    let mom = empirical_moments(data, divisor);
    let mut cols = Vec::with_capacity(max_a);
    let mut v = mom.sigma_xy.clone();
    for _ in 0..max_a {
        cols.push(v.clone());
        v = &mom.sigma_xx * &v;
    }
    normalized_column_rank(&cols)
}

#[allow(dead_code)]
pub(crate) fn rank_tolerance() -> f64 {
    RANK_REL_TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn gaussian_data(seed: u64, n: usize, p: usize, beta: &[f64], noise: f64) -> Dataset {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let bv = DVector::from_vec(beta.to_vec());
        let y = DVector::from_fn(n, |i, _| {
            x.row(i).transpose().dot(&bv) + noise * rng.sample::<f64, _>(StandardNormal)
        });
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn one_step_identity_design() {
        // orthonormal scaled columns: Sigma_hat = I exactly
        let n = 4;
        let p = 2;
        let raw = DMatrix::from_row_slice(n, p, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        let x = raw * (3.0f64).sqrt() / 2.0; // columns have mean 0, var 1 (divisor n-1)
        let y = DVector::from_vec(vec![1.0, 0.5, -0.5, -1.0]);
        let data = Dataset::new(x, y).unwrap();
        let mom = empirical_moments(&data, CovDivisor::NMinusOne);
        assert!((mom.sigma_xx.clone() - DMatrix::identity(p, p)).norm() < 1e-12);
        let fit = fit_pls(&data, 1).unwrap();
        // with Sigma_hat = I the one-step estimator is sigma_xy itself
        assert!((fit.beta_hat.clone() - mom.sigma_xy.clone()).norm() < 1e-10);
    }

    #[test]
    fn full_component_fit_matches_ols() {
        let data = gaussian_data(11, 60, 4, &[0.5, -1.0, 0.25, 2.0], 0.3);
        let mom = empirical_moments(&data, CovDivisor::NMinusOne);
        let ols = mom.sigma_xx.clone().cholesky().unwrap().solve(&mom.sigma_xy);
        let fit = fit_pls(&data, 4).unwrap();
        assert!((fit.beta_hat.clone() - ols).norm() < 1e-6 * fit.beta_hat.norm().max(1.0));
    }

    #[test]
    fn constant_response_is_rank_deficient() {
        let mut data = gaussian_data(3, 30, 3, &[0.0, 0.0, 0.0], 0.0);
        data.y = DVector::from_element(30, 2.5);
        let data = Dataset::new(data.x, data.y).unwrap();
        let err = fit_pls(&data, 1).unwrap_err();
        assert!(matches!(err, PlsError::RankDeficientKrylov { rank: 0, .. }));
    }

    #[test]
    fn krylov_representation_reconstructs_beta() {
        let data = gaussian_data(21, 50, 6, &[1.0, 0.0, -0.5, 0.2, 0.0, 0.1], 0.5);
        let fit = fit_pls(&data, 3).unwrap();
        let mut rec = DVector::<f64>::zeros(6);
        for j in 0..fit.a {
            rec += fit.krylov_term(j);
        }
        assert!((rec - &fit.beta_hat).norm() <= 1e-8 * fit.beta_hat.norm().max(1.0));
        // e_1 = sigma_xy, e_(j+1) = Sigma e_j exactly as computed
        let mom = empirical_moments(&data, CovDivisor::NMinusOne);
        assert_eq!(fit.e_hat[0], mom.sigma_xy);
        assert_eq!(fit.e_hat[1], &mom.sigma_xx * &fit.e_hat[0]);
    }

    #[test]
    fn predict_at_mean_returns_mean() {
        let data = gaussian_data(7, 40, 3, &[1.0, 2.0, -1.0], 0.2);
        let fit = fit_pls(&data, 2).unwrap();
        let y0 = fit.predict(&fit.x_mean.clone()).unwrap();
        assert_abs_diff_eq!(y0, fit.y_mean, epsilon = 1e-12);
        assert!(fit.predict(&DVector::zeros(5)).is_err());
    }

    #[test]
    fn noiseless_exact_law_is_recovered() {
        let beta = [2.0, -1.0, 0.5];
        let data = gaussian_data(13, 50, 3, &beta, 0.0);
        let fit = fit_pls(&data, 3).unwrap();
        let x_new = DVector::from_vec(vec![0.3, -0.6, 1.1]);
        let want = x_new.dot(&DVector::from_vec(beta.to_vec()));
        assert_abs_diff_eq!(fit.predict(&x_new).unwrap(), want, epsilon = 1e-6);
    }

    #[test]
    fn skew_projection_cases() {
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0, 0.5]));
        let e1 = DVector::from_vec(vec![1.0, 0.5, 0.0, 0.0]);
        let e2 = &sigma * &e1;
        let krylov = vec![e1.clone(), e2.clone()];
        // in-span vector is reproduced with zero residual
        let target = 2.0 * &e1 - 0.5 * &e2;
        let (coef, resid) = skew_project(&target, &krylov, &sigma).unwrap();
        assert!(resid.norm() < 1e-10);
        assert_abs_diff_eq!(coef[0], 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(coef[1], -0.5, epsilon = 1e-8);
        // Sigma-orthogonal vector passes through untouched
        let mut f = DVector::from_vec(vec![0.0, 0.0, 1.0, -0.3]);
        // make it Sigma-orthogonal to both Krylov vectors
        let (basis, _) = sigma_orthonormalize(&krylov, &sigma).unwrap();
        for b in &basis {
            f -= quad_form(b, &sigma, &f) * b;
        }
        let (coef, resid) = skew_project(&f, &krylov, &sigma).unwrap();
        assert!(coef.norm() < 1e-10);
        assert!((resid - f).norm() < 1e-10);
    }

    #[test]
    fn skew_projection_orthogonality_and_reconstruction() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let p = 6;
        let a = 3;
        let m = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sigma = &m * m.transpose() + DMatrix::<f64>::identity(p, p);
        let mut krylov = vec![DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal))];
        for j in 1..a {
            let next = &sigma * &krylov[j - 1];
            krylov.push(next);
        }
        let beta: DVector<f64> = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let (coef, resid) = skew_project(&beta, &krylov, &sigma).unwrap();
        let mut rec = resid.clone();
        for j in 0..a {
            rec += coef[j] * &krylov[j];
        }
        assert!((rec - &beta).norm() < 1e-9 * beta.norm().max(1.0));
        for k in &krylov {
            let dot = quad_form(k, &sigma, &resid);
            assert!(dot.abs() < 1e-8 * k.norm() * resid.norm().max(1.0) * sigma.norm());
        }
    }

    #[test]
    fn csv_round_trip_with_and_without_header() {
        let body = "1.0,2.0,3.5\n4.0,5.0,6.5\n7.0,8.0,9.5\n";
        let with_header = format!("x1,x2,y\n{body}");
        let d1 = Dataset::from_csv_str(body, false).unwrap();
        let d2 = Dataset::from_csv_str(&with_header, true).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(d1.p(), 2);
        assert_eq!(d1.n(), 3);
        assert!(Dataset::from_csv_str("1.0,oops\n2.0,3.0\n", false).is_err());
        assert!(Dataset::from_csv_str("1.0,2.0\n1.0\n", false).is_err());
    }
}
