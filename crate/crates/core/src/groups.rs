//! Group actions on the full parameter and on reductions: orthogonal
//! rotations of the eigenvectors combined with per-component scale maps,
//! and the orbit invariant they preserve.

use nalgebra::{DMatrix, DVector};

use crate::error::GroupError;
use crate::linalg::symmetrize;
use crate::model::{
    beta_true, group_projections, FullParameter, ReducedComponent, ReducedParameter,
    SpectralDecomposition, GAMMA_ZERO_TOL,
};

const ORTHOGONALITY_TOL: f64 = 1e-10;

/// A bijective continuous scalar map given as a strictly monotone
/// piecewise-linear table; values outside the breakpoints extrapolate with
/// the end slopes, so the map is a bijection of the whole line.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl MonotoneTable {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, GroupError> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(GroupError::InvalidGroupElement(
                "table needs at least two breakpoints".into(),
            ));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GroupError::InvalidGroupElement(
                "breakpoint abscissae must be strictly increasing".into(),
            ));
        }
        let increasing = ys.windows(2).all(|w| w[1] > w[0]);
        let decreasing = ys.windows(2).all(|w| w[1] < w[0]);
        if !(increasing || decreasing) {
            return Err(GroupError::InvalidGroupElement(
                "table ordinates must be strictly monotone".into(),
            ));
        }
        Ok(Self { xs, ys })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let seg = if x <= self.xs[0] {
            0
        } else if x >= self.xs[n - 1] {
            n - 2
        } else {
            self.xs.partition_point(|&b| b <= x) - 1
        };
        let (x0, x1) = (self.xs[seg], self.xs[seg + 1]);
        let (y0, y1) = (self.ys[seg], self.ys[seg + 1]);
        y0 + (x - x0) * (y1 - y0) / (x1 - x0)
    }
}

/// One per-component scale map: a positive linear factor (the group of scale
/// transformations) or a general monotone table (the bigger group).
#[derive(Debug, Clone, PartialEq)]
pub enum ScaleMap {
    Linear(f64),
    Table(MonotoneTable),
}

impl ScaleMap {
    pub fn eval(&self, gamma: f64) -> f64 {
        match self {
            ScaleMap::Linear(a) => a * gamma,
            ScaleMap::Table(t) => t.eval(gamma),
        }
    }

    /// Whether the map sends zero to zero (the condition of the orbit theorem).
    pub fn fixes_zero(&self) -> bool {
        self.eval(0.0).abs() <= GAMMA_ZERO_TOL
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, ScaleMap::Linear(_))
    }
}

/// A group element: an orthogonal rotation acting on the eigenvectors plus
/// per-component scale maps acting on the coefficients.
#[derive(Debug, Clone)]
pub struct GroupElement {
    rotation: DMatrix<f64>,
    scales: Vec<ScaleMap>,
}

impl GroupElement {
    pub fn new(rotation: DMatrix<f64>, scales: Vec<ScaleMap>) -> Result<Self, GroupError> {
        let p = rotation.nrows();
        if rotation.ncols() != p {
            return Err(GroupError::InvalidGroupElement(
                "rotation must be square".into(),
            ));
        }
        let dev = (&rotation.transpose() * &rotation - DMatrix::<f64>::identity(p, p)).norm();
        if dev > ORTHOGONALITY_TOL * (p as f64).sqrt() {
            return Err(GroupError::InvalidGroupElement(format!(
                "rotation is not orthogonal (||O'O - I|| = {dev:e})"
            )));
        }
        for s in &scales {
            if let ScaleMap::Linear(a) = s {
                if !(a.is_finite() && *a > 0.0) {
                    return Err(GroupError::InvalidGroupElement(format!(
                        "linear scale {a} must be strictly positive"
                    )));
                }
            }
        }
        Ok(Self { rotation, scales })
    }

    pub fn identity(p: usize, n_scales: usize) -> Self {
        Self {
            rotation: DMatrix::identity(p, p),
            scales: vec![ScaleMap::Linear(1.0); n_scales],
        }
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn scales(&self) -> &[ScaleMap] {
        &self.scales
    }
}

/// Action of the big group on the full parameter: Sigma'xx = O Sigma_xx O',
/// and sigma'xy is rebuilt so the eigenbasis coordinates of beta transform by
/// gamma_j -> g_j(gamma_j) on the rotated eigenvectors O d_j. The residual
/// variance is left fixed.
pub fn apply_k(k: &GroupElement, phi: &FullParameter) -> Result<FullParameter, GroupError> {
    let p = phi.p();
    if k.rotation.nrows() != p {
        return Err(GroupError::InvalidGroupElement(format!(
            "rotation is {}x{}, parameter has p = {p}",
            k.rotation.nrows(),
            k.rotation.ncols()
        )));
    }
    if k.scales.len() != p {
        return Err(GroupError::InvalidGroupElement(format!(
            "need {p} scale maps, got {}",
            k.scales.len()
        )));
    }
    let beta = beta_true(phi)?;
    let spec = SpectralDecomposition::of(phi);
    let coords = spec.eigenvectors().transpose() * &beta;
    let mut new_coords = DVector::<f64>::zeros(p);
    for j in 0..p {
        new_coords[j] = k.scales[j].eval(coords[j]);
        if !new_coords[j].is_finite() {
            return Err(GroupError::InvalidGroupElement(format!(
                "scale map {j} produced a non-finite value"
            )));
        }
    }
    let rotated_basis = &k.rotation * spec.eigenvectors();
    let new_beta = &rotated_basis * &new_coords;
    let new_sigma = symmetrize(&(&k.rotation * phi.sigma_xx() * k.rotation.transpose()));
    let new_sigma_xy = &new_sigma * &new_beta;
    Ok(FullParameter::new(new_sigma, new_sigma_xy, phi.sigma2())?)
}

/// Action of the reduction group on theta: d'_j = O d_j, gamma'_j = alpha_j
/// gamma_j with positive linear scales only.
pub fn apply_g(g: &GroupElement, theta: &ReducedParameter) -> Result<ReducedParameter, GroupError> {
    let p = theta.p();
    let m = theta.m();
    if g.rotation.nrows() != p {
        return Err(GroupError::InvalidGroupElement(format!(
            "rotation is {}x{}, reduction has p = {p}",
            g.rotation.nrows(),
            g.rotation.ncols()
        )));
    }
    if g.scales.len() != m {
        return Err(GroupError::InvalidGroupElement(format!(
            "need {m} scale maps, got {}",
            g.scales.len()
        )));
    }
    let mut components = Vec::with_capacity(m);
    for (c, s) in theta.components().iter().zip(&g.scales) {
        let ScaleMap::Linear(alpha) = s else {
            return Err(GroupError::InvalidGroupElement(
                "the reduction group admits linear positive scales only".into(),
            ));
        };
        components.push(ReducedComponent {
            gamma: alpha * c.gamma,
            direction: &g.rotation * &c.direction,
        });
    }
    Ok(ReducedParameter::new(components, p)?)
}

/// Number of nonzero eigenbasis coordinates of beta, counting one per
/// multiplicity group with a nonzero projection. Constant along orbits of the
/// big group whenever every scale map fixes zero.
pub fn orbit_invariant_nonzero_count(phi: &FullParameter) -> usize {
    let beta = match beta_true(phi) {
        Ok(b) => b,
        Err(_) => return 0,
    };
    let spec = SpectralDecomposition::of(phi);
    let tol = GAMMA_ZERO_TOL * beta.norm().max(1.0);
    group_projections(phi, &spec, &beta)
        .iter()
        .filter(|(norm, _)| *norm > tol)
        .count()
}

/// Construct a group element carrying `from` onto `to` (same m, same p): a
/// rotation aligning the component directions, sign flips absorbed into the
/// rotation, and positive scales matching the coefficients. Witnesses the
/// transitivity of the reduction group.
pub fn transitivity_witness(
    from: &ReducedParameter,
    to: &ReducedParameter,
) -> Result<GroupElement, GroupError> {
    let (p, m) = (from.p(), from.m());
    if to.p() != p || to.m() != m {
        return Err(GroupError::InvalidGroupElement(format!(
            "shape mismatch: ({}, {}) vs ({p}, {m})",
            to.p(),
            to.m()
        )));
    }
    let mut signs = Vec::with_capacity(m);
    let mut scales = Vec::with_capacity(m);
    for (cf, ct) in from.components().iter().zip(to.components()) {
        let s = if ct.gamma * cf.gamma >= 0.0 { 1.0 } else { -1.0 };
        signs.push(s);
        scales.push(ScaleMap::Linear((ct.gamma / cf.gamma).abs()));
    }
    let basis_from = complete_basis(from, &vec![1.0; m]);
    let basis_to = complete_basis(to, &signs);
    let rotation = basis_to * basis_from.transpose();
    GroupElement::new(rotation, scales)
}

/// Extend the (sign-adjusted) component directions to a full orthonormal
/// basis by Gram-Schmidt against the canonical basis vectors.
fn complete_basis(theta: &ReducedParameter, signs: &[f64]) -> DMatrix<f64> {
    let p = theta.p();
    let mut cols: Vec<DVector<f64>> = theta
        .components()
        .iter()
        .zip(signs)
        .map(|(c, &s)| s * &c.direction)
        .collect();
    let mut next = 0usize;
    while cols.len() < p && next < p {
        let mut v = DVector::<f64>::zeros(p);
        v[next] = 1.0;
        next += 1;
        for _ in 0..2 {
            for c in &cols {
                let d = c.dot(&v);
                v -= d * c;
            }
        }
        let n = v.norm();
        if n > 1e-8 {
            cols.push(v / n);
        }
    }
    let mut out = DMatrix::<f64>::zeros(p, p);
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{beta_of_theta, reduce_to_theta};
    use approx::assert_abs_diff_eq;

    fn diag_phi(diag: &[f64], sxy: &[f64]) -> FullParameter {
        FullParameter::new(
            DMatrix::from_diagonal(&DVector::from_vec(diag.to_vec())),
            DVector::from_vec(sxy.to_vec()),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn monotone_table_interp_and_extrapolation() {
        let t = MonotoneTable::new(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(t.eval(0.5), 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(t.eval(-1.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.eval(2.0), 3.0, epsilon = 1e-15);
        assert!(MonotoneTable::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(MonotoneTable::new(vec![1.0, 0.0], vec![0.0, 1.0]).is_err());
        // decreasing tables are valid bijections too
        let dec = MonotoneTable::new(vec![0.0, 1.0], vec![1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(dec.eval(0.25), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn apply_k_identity_fixes_phi() {
        let phi = diag_phi(&[2.0, 1.0], &[1.0, 1.0]);
        let k = GroupElement::identity(2, 2);
        let phi2 = apply_k(&k, &phi).unwrap();
        assert!((phi2.sigma_xx() - phi.sigma_xx()).norm() < 1e-12);
        assert!((phi2.sigma_xy() - phi.sigma_xy()).norm() < 1e-12);
        assert_eq!(phi2.sigma2(), phi.sigma2());
    }

    #[test]
    fn apply_k_permutation_swaps_spectrum() {
        let phi = diag_phi(&[2.0, 1.0], &[1.0, 1.0]);
        let perm = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let k = GroupElement::new(perm, vec![ScaleMap::Linear(1.0); 2]).unwrap();
        let phi2 = apply_k(&k, &phi).unwrap();
        assert_abs_diff_eq!(phi2.sigma_xx()[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(phi2.sigma_xx()[(1, 1)], 2.0, epsilon = 1e-12);
        // eigen-coordinates of beta permute with the eigenvectors
        let b2 = beta_true(&phi2).unwrap();
        assert_abs_diff_eq!(b2[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b2[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn apply_k_doubling_scales_doubles_coordinates() {
        let phi = diag_phi(&[2.0, 1.0], &[1.0, 1.0]);
        let k = GroupElement::new(
            DMatrix::identity(2, 2),
            vec![ScaleMap::Linear(2.0); 2],
        )
        .unwrap();
        let phi2 = apply_k(&k, &phi).unwrap();
        assert!((phi2.sigma_xx() - phi.sigma_xx()).norm() < 1e-12);
        let b = beta_true(&phi).unwrap();
        let b2 = beta_true(&phi2).unwrap();
        assert!((b2 - 2.0 * b).norm() < 1e-12);
    }

    #[test]
    fn apply_g_scaling_and_negation() {
        let phi = diag_phi(&[2.0, 1.0], &[1.0, 1.0]);
        let theta = reduce_to_theta(&phi, 2).unwrap();
        let g = GroupElement::new(
            DMatrix::identity(2, 2),
            vec![ScaleMap::Linear(2.0), ScaleMap::Linear(2.0)],
        )
        .unwrap();
        let t2 = apply_g(&g, &theta).unwrap();
        for (a, b) in theta.components().iter().zip(t2.components()) {
            assert_abs_diff_eq!(b.gamma, 2.0 * a.gamma, epsilon = 1e-12);
            assert_eq!(b.direction, a.direction);
        }
        let neg = GroupElement::new(
            -DMatrix::<f64>::identity(2, 2),
            vec![ScaleMap::Linear(1.0), ScaleMap::Linear(1.0)],
        )
        .unwrap();
        let t3 = apply_g(&neg, &theta).unwrap();
        assert!((beta_of_theta(&t3) + beta_of_theta(&theta)).norm() < 1e-12);
        // identity
        let tid = apply_g(&GroupElement::identity(2, 2), &theta).unwrap();
        assert_eq!(tid.components(), theta.components());
    }

    #[test]
    fn apply_g_rejects_table_scales() {
        let phi = diag_phi(&[2.0, 1.0], &[1.0, 1.0]);
        let theta = reduce_to_theta(&phi, 2).unwrap();
        let table = ScaleMap::Table(MonotoneTable::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap());
        let g = GroupElement::new(DMatrix::identity(2, 2), vec![table, ScaleMap::Linear(1.0)])
            .unwrap();
        assert!(matches!(
            apply_g(&g, &theta),
            Err(GroupError::InvalidGroupElement(_))
        ));
    }

    #[test]
    fn orbit_count_zero_sigma_xy() {
        let phi = diag_phi(&[2.0, 1.0], &[0.0, 0.0]);
        assert_eq!(orbit_invariant_nonzero_count(&phi), 0);
        let k = GroupElement::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            vec![ScaleMap::Linear(3.0); 2],
        )
        .unwrap();
        let phi2 = apply_k(&k, &phi).unwrap();
        assert_eq!(orbit_invariant_nonzero_count(&phi2), 0);
    }

    #[test]
    fn zero_shifting_map_changes_count() {
        // planted zero coordinate on the smallest eigenvalue
        let phi = diag_phi(&[3.0, 2.0, 1.0], &[1.0, 1.0, 0.0]);
        assert_eq!(orbit_invariant_nonzero_count(&phi), 2);
        let shift = ScaleMap::Table(
            MonotoneTable::new(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap(), // g(x) = x + 1
        );
        assert!(!shift.fixes_zero());
        let k = GroupElement::new(
            DMatrix::identity(3, 3),
            vec![ScaleMap::Linear(1.0), ScaleMap::Linear(1.0), shift],
        )
        .unwrap();
        let phi2 = apply_k(&k, &phi).unwrap();
        assert_eq!(orbit_invariant_nonzero_count(&phi2), 3);
    }

    #[test]
    fn witness_maps_theta_onto_target() {
        let phi1 = diag_phi(&[2.0, 1.0], &[1.0, 1.0]);
        let phi2 = diag_phi(&[3.0, 0.5], &[-0.6, 0.25]);
        let t1 = reduce_to_theta(&phi1, 2).unwrap();
        let t2 = reduce_to_theta(&phi2, 2).unwrap();
        let g = transitivity_witness(&t1, &t2).unwrap();
        let mapped = apply_g(&g, &t1).unwrap();
        for (a, b) in mapped.components().iter().zip(t2.components()) {
            let pa = a.gamma * &a.direction;
            let pb = b.gamma * &b.direction;
            assert!((pa - pb).norm() < 1e-8);
        }
    }
}
