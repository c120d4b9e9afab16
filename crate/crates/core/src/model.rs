//! The full second-moment parameter, its spectral/Krylov structure, and the
//! model reductions built on the covariance eigenbasis.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::linalg::{
    max_rel_asymmetry, normalized_column_rank, quad_form, solve_spd, RANK_REL_TOL,
    SYMMETRY_REL_TOL,
};

/// Coordinates of the regression vector below this threshold (relative to
/// max(1, |beta|)) count as zero when deciding which components are relevant.
pub const GAMMA_ZERO_TOL: f64 = 1e-10;

/// Eigenvalues closer than this (relative to the largest) share a
/// multiplicity group.
pub const MULTIPLICITY_REL_TOL: f64 = 1e-8;

/// The full (inaccessible) parameter: x-covariance matrix, x–y covariance
/// vector and residual variance var(y|x). Everything else derives from it.
///
/// All variables are centered; expectations are zero by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FullParameter {
    sigma_xx: DMatrix<f64>,
    sigma_xy: DVector<f64>,
    sigma2: f64,
}

#[derive(Serialize, Deserialize)]
struct FullParameterRepr {
    sigma_xx: Vec<Vec<f64>>,
    sigma_xy: Vec<f64>,
    sigma2: f64,
}

impl FullParameter {
    /// Validates symmetry (1e-12 relative), positive definiteness and a
    /// nonnegative residual variance.
    pub fn new(
        sigma_xx: DMatrix<f64>,
        sigma_xy: DVector<f64>,
        sigma2: f64,
    ) -> Result<Self, ModelError> {
        let p = sigma_xx.nrows();
        if sigma_xx.ncols() != p {
            return Err(ModelError::DimensionMismatch {
                expected: p,
                got: sigma_xx.ncols(),
            });
        }
        if sigma_xy.len() != p {
            return Err(ModelError::DimensionMismatch {
                expected: p,
                got: sigma_xy.len(),
            });
        }
        if p == 0 {
            return Err(ModelError::InvalidParameter("empty parameter".into()));
        }
        let asym = max_rel_asymmetry(&sigma_xx);
        if asym > SYMMETRY_REL_TOL {
            return Err(ModelError::NotSymmetric { max_asym: asym });
        }
        if sigma_xy.iter().any(|v| !v.is_finite()) || !sigma2.is_finite() {
            return Err(ModelError::InvalidParameter("non-finite entry".into()));
        }
        if sigma2 < 0.0 {
            return Err(ModelError::InvalidParameter(format!(
                "negative residual variance {sigma2}"
            )));
        }
        let eig = sigma_xx.clone().symmetric_eigen();
        let min_eig = eig.eigenvalues.min();
        let max_eig = eig.eigenvalues.max();
        if min_eig <= RANK_REL_TOL * RANK_REL_TOL * max_eig.max(0.0) || min_eig <= 0.0 {
            return Err(ModelError::NonPositiveDefinite { min_eig });
        }
        Ok(Self {
            sigma_xx,
            sigma_xy,
            sigma2,
        })
    }

    /// Build from var(y) instead of the residual variance:
    /// sigma2 = var(y) - sigma_xy' Sigma_xx^-1 sigma_xy, which must be >= 0.
    pub fn from_var_y(
        sigma_xx: DMatrix<f64>,
        sigma_xy: DVector<f64>,
        var_y: f64,
    ) -> Result<Self, ModelError> {
        let probe = Self::new(sigma_xx, sigma_xy, 0.0)?;
        let explained = probe.explained_variance();
        let sigma2 = var_y - explained;
        if sigma2 < -1e-12 * var_y.abs().max(1.0) {
            return Err(ModelError::InvalidParameter(format!(
                "var(y) = {var_y} is below the explained variance {explained}"
            )));
        }
        Self::new(probe.sigma_xx, probe.sigma_xy, sigma2.max(0.0))
    }

    pub fn p(&self) -> usize {
        self.sigma_xx.nrows()
    }

    pub fn sigma_xx(&self) -> &DMatrix<f64> {
        &self.sigma_xx
    }

    pub fn sigma_xy(&self) -> &DVector<f64> {
        &self.sigma_xy
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// beta' Sigma_xx beta, the variance of the best linear predictor.
    pub fn explained_variance(&self) -> f64 {
        let beta = beta_true(self).expect("validated parameter is positive definite");
        self.sigma_xy.dot(&beta)
    }

    /// var(y), reconstructed as sigma2 + sigma_xy' Sigma_xx^-1 sigma_xy.
    pub fn var_y(&self) -> f64 {
        self.sigma2 + self.explained_variance()
    }

    /// Serialize as `{"sigma_xx": [[..]], "sigma_xy": [..], "sigma2": x}`,
    /// matrix row-major.
    pub fn to_json(&self) -> String {
        let repr = FullParameterRepr {
            sigma_xx: (0..self.p())
                .map(|i| self.sigma_xx.row(i).iter().copied().collect())
                .collect(),
            sigma_xy: self.sigma_xy.iter().copied().collect(),
            sigma2: self.sigma2,
        };
        serde_json::to_string_pretty(&repr).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let repr: FullParameterRepr = serde_json::from_str(text)
            .map_err(|e| ModelError::InvalidParameter(format!("json: {e}")))?;
        let p = repr.sigma_xx.len();
        for row in &repr.sigma_xx {
            if row.len() != p {
                return Err(ModelError::DimensionMismatch {
                    expected: p,
                    got: row.len(),
                });
            }
        }
        let sigma_xx = DMatrix::from_fn(p, p, |i, j| repr.sigma_xx[i][j]);
        Self::new(sigma_xx, DVector::from_vec(repr.sigma_xy), repr.sigma2)
    }
}

/// Eigendecomposition of the x-covariance matrix with a deterministic sign
/// convention and the partition of indices into equal-eigenvalue groups.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    multiplicity_groups: Vec<Vec<usize>>,
}

impl SpectralDecomposition {
    pub fn of(phi: &FullParameter) -> Self {
        Self::of_matrix(phi.sigma_xx())
    }

    /// Matrix must be symmetric; eigenvalues are sorted descending and each
    /// eigenvector is flipped so its largest-magnitude entry is positive,
    /// which makes the output a pure function of the input.
    pub fn of_matrix(sigma: &DMatrix<f64>) -> Self {
        let p = sigma.nrows();
        let eig = sigma.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });
        let mut eigenvalues = Vec::with_capacity(p);
        let mut eigenvectors = DMatrix::<f64>::zeros(p, p);
        for (dst, &src) in order.iter().enumerate() {
            eigenvalues.push(eig.eigenvalues[src]);
            let mut col = eig.eigenvectors.column(src).clone_owned();
            let mut pivot = 0;
            for i in 1..p {
                if col[i].abs() > col[pivot].abs() {
                    pivot = i;
                }
            }
            if col[pivot] < 0.0 {
                col.neg_mut();
            }
            eigenvectors.set_column(dst, &col);
        }
        let tol = MULTIPLICITY_REL_TOL * eigenvalues[0].abs().max(1e-300);
        let mut multiplicity_groups: Vec<Vec<usize>> = vec![vec![0]];
        for i in 1..p {
            if eigenvalues[i - 1] - eigenvalues[i] <= tol {
                multiplicity_groups.last_mut().unwrap().push(i);
            } else {
                multiplicity_groups.push(vec![i]);
            }
        }
        Self {
            eigenvalues,
            eigenvectors,
            multiplicity_groups,
        }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Columns are the eigenvectors, ordered like `eigenvalues`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn multiplicity_groups(&self) -> &[Vec<usize>] {
        &self.multiplicity_groups
    }

    pub fn p(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// One retained component of the PLS reduction: a nonzero coefficient paired
/// with a unit eigenvector of the x-covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedComponent {
    pub gamma: f64,
    pub direction: DVector<f64>,
}

/// The PLS reduction theta: m pairs (gamma_j, d_j) with beta(theta) given by
/// the sum of gamma_j d_j.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedParameter {
    components: Vec<ReducedComponent>,
    p: usize,
}

impl ReducedParameter {
    /// Validates: every |gamma| above the zero tolerance, unit directions,
    /// mutual orthogonality. Whether each direction is an eigenvector of a
    /// particular covariance matrix is checked by [`Self::validate_against`].
    pub fn new(components: Vec<ReducedComponent>, p: usize) -> Result<Self, ModelError> {
        for c in &components {
            if c.direction.len() != p {
                return Err(ModelError::DimensionMismatch {
                    expected: p,
                    got: c.direction.len(),
                });
            }
            if !c.gamma.is_finite() || c.gamma.abs() <= GAMMA_ZERO_TOL {
                return Err(ModelError::InvalidParameter(format!(
                    "component coefficient {} is zero within tolerance",
                    c.gamma
                )));
            }
        }
        for i in 0..components.len() {
            for j in 0..=i {
                let dot = components[i].direction.dot(&components[j].direction);
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-8 {
                    return Err(ModelError::InvalidParameter(
                        "directions are not orthonormal".into(),
                    ));
                }
            }
        }
        Ok(Self { components, p })
    }

    pub fn components(&self) -> &[ReducedComponent] {
        &self.components
    }

    pub fn m(&self) -> usize {
        self.components.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Residual of each direction as an eigenvector of `sigma_xx`:
    /// ||Sigma d - (d'Sigma d) d|| must stay below 1e-8 of the eigenvalue scale.
    pub fn validate_against(&self, phi: &FullParameter) -> Result<(), ModelError> {
        if self.p != phi.p() {
            return Err(ModelError::DimensionMismatch {
                expected: phi.p(),
                got: self.p,
            });
        }
        let scale = phi
            .sigma_xx()
            .diagonal()
            .iter()
            .fold(0.0f64, |a, &x| a.max(x.abs()))
            .max(1e-300);
        for c in &self.components {
            let sd = phi.sigma_xx() * &c.direction;
            let lambda = c.direction.dot(&sd);
            let resid = (&sd - lambda * &c.direction).norm();
            if resid > 1e-8 * scale {
                return Err(ModelError::InvalidParameter(format!(
                    "direction is not an eigenvector (residual {resid:e})"
                )));
            }
        }
        Ok(())
    }
}

/// A rival m-dimensional reduction, expressed by its coefficients on the
/// covariance eigenbasis. No constraint on the zero pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct AlternativeReduction {
    zeta: DVector<f64>,
}

impl AlternativeReduction {
    pub fn new(zeta: DVector<f64>) -> Result<Self, ModelError> {
        if zeta.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidParameter(
                "non-finite eigenbasis coefficient".into(),
            ));
        }
        Ok(Self { zeta })
    }

    pub fn zeta(&self) -> &DVector<f64> {
        &self.zeta
    }
}

/// The Krylov sequence sigma_xy, Sigma_xx sigma_xy, ..., Sigma_xx^(a-1) sigma_xy,
/// stored exactly as computed by repeated multiplication.
#[derive(Debug, Clone)]
pub struct KrylovBasis {
    vectors: Vec<DVector<f64>>,
}

impl KrylovBasis {
    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.vectors
    }

    pub fn a(&self) -> usize {
        self.vectors.len()
    }
}

/// The true regression vector solving Sigma_xx beta = sigma_xy.
pub fn beta_true(phi: &FullParameter) -> Result<DVector<f64>, ModelError> {
    solve_spd(phi.sigma_xx(), phi.sigma_xy()).ok_or(ModelError::NonPositiveDefinite {
        min_eig: f64::NAN,
    })
}

/// The smallest number of components m such that beta is a linear function of
/// the Krylov sequence: the numerical rank of the stacked Krylov matrix
/// (rank tolerance 1e-8 times the largest singular value), which equals the
/// number of distinct eigenspaces carrying a nonzero projection of sigma_xy.
pub fn relevant_component_count(phi: &FullParameter) -> usize {
    let basis = krylov_basis(phi, phi.p());
    normalized_column_rank(basis.vectors())
}

/// First `a` Krylov vectors by repeated multiplication.
pub fn krylov_basis(phi: &FullParameter, a: usize) -> KrylovBasis {
    let mut vectors = Vec::with_capacity(a);
    let mut v = phi.sigma_xy().clone();
    for _ in 0..a {
        vectors.push(v.clone());
        v = phi.sigma_xx() * &v;
    }
    KrylovBasis { vectors }
}

/// Reduce the full parameter to theta with exactly `m` components.
///
/// Within each multiplicity group of eigenvalues, the retained direction is
/// the normalized projection of beta onto the group's eigenspace (rotating a
/// degenerate eigenbasis so a single eigenvector lies along beta). Components
/// are ordered by descending |gamma_j| lambda_j, ties broken by descending
/// |gamma_j| and then group order.
pub fn reduce_to_theta(phi: &FullParameter, m: usize) -> Result<ReducedParameter, ModelError> {
    let count = relevant_component_count(phi);
    if m != count {
        return Err(ModelError::DimensionMismatch {
            expected: count,
            got: m,
        });
    }
    let beta = beta_true(phi)?;
    let spec = SpectralDecomposition::of(phi);
    let tol = GAMMA_ZERO_TOL * beta.norm().max(1.0);
    let mut picked: Vec<(f64, f64, usize, DVector<f64>)> = Vec::new();
    for (gidx, group) in spec.multiplicity_groups().iter().enumerate() {
        let mut proj = DVector::<f64>::zeros(phi.p());
        let mut lambda_mean = 0.0;
        for &i in group {
            let d = spec.eigenvectors().column(i);
            proj += d.dot(&beta) * d;
            lambda_mean += spec.eigenvalues()[i];
        }
        lambda_mean /= group.len() as f64;
        let norm = proj.norm();
        if norm > tol {
            let direction = proj / norm;
            picked.push((norm, lambda_mean, gidx, direction));
        }
    }
    if picked.len() != m {
        return Err(ModelError::DimensionMismatch {
            expected: picked.len(),
            got: m,
        });
    }
    picked.sort_by(|a, b| {
        let key_a = a.0.abs() * a.1;
        let key_b = b.0.abs() * b.1;
        key_b
            .total_cmp(&key_a)
            .then(b.0.abs().total_cmp(&a.0.abs()))
            .then(a.2.cmp(&b.2))
    });
    let components = picked
        .into_iter()
        .map(|(gamma, _, _, direction)| ReducedComponent { gamma, direction })
        .collect();
    ReducedParameter::new(components, phi.p())
}

/// beta(theta) as the sum of gamma_j d_j; the empty reduction gives zero.
pub fn beta_of_theta(theta: &ReducedParameter) -> DVector<f64> {
    let mut beta = DVector::zeros(theta.p());
    for c in theta.components() {
        beta += c.gamma * &c.direction;
    }
    beta
}

/// beta(eta) = D zeta on the given eigenbasis.
pub fn beta_of_eta(
    eta: &AlternativeReduction,
    spec: &SpectralDecomposition,
) -> Result<DVector<f64>, ModelError> {
    if eta.zeta().len() != spec.p() {
        return Err(ModelError::DimensionMismatch {
            expected: spec.p(),
            got: eta.zeta().len(),
        });
    }
    Ok(spec.eigenvectors() * eta.zeta())
}

/// Projection of beta onto each multiplicity group's eigenspace; used by the
/// group module and as the spectral-side oracle for the Krylov rank.
pub(crate) fn group_projections(
    phi: &FullParameter,
    spec: &SpectralDecomposition,
    beta: &DVector<f64>,
) -> Vec<(f64, DVector<f64>)> {
    let mut out = Vec::new();
    for group in spec.multiplicity_groups() {
        let mut proj = DVector::<f64>::zeros(phi.p());
        for &i in group {
            let d = spec.eigenvectors().column(i);
            proj += d.dot(beta) * d;
        }
        out.push((proj.norm(), proj));
    }
    out
}

pub(crate) fn quad_form_sigma(phi: &FullParameter, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    quad_form(u, phi.sigma_xx(), v)
}
