//! Small linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

/// Relative Krylov/eigen rank threshold (fraction of the largest singular value).
pub(crate) const RANK_REL_TOL: f64 = 1e-8;

/// Maximum allowed relative asymmetry of a covariance matrix.
pub(crate) const SYMMETRY_REL_TOL: f64 = 1e-12;

/// Compensated (Neumaier) summation, so aggregates are reproducible to
/// rounding regardless of evaluation schedule.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Mean and standard error of the mean (sample sd / sqrt(n)), compensated.
pub(crate) fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut s = KahanSum::default();
    for &v in values {
        s.add(v);
    }
    let mean = s.value() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let mut sq = KahanSum::default();
    for &v in values {
        let d = v - mean;
        sq.add(d * d);
    }
    let var = sq.value() / (n - 1) as f64;
    ((mean), (var / n as f64).sqrt())
}

/// Max absolute asymmetry |A - A'| relative to max |A|.
pub(crate) fn max_rel_asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.iter().fold(0.0f64, |acc, &x| acc.max(x.abs())).max(1e-300);
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

pub(crate) fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (a + a.transpose())
}

/// Quadratic form u' A v.
pub(crate) fn quad_form(u: &DVector<f64>, a: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    u.dot(&(a * v))
}

/// Solve A x = b for symmetric positive-definite A by Cholesky with one step
/// of iterative refinement.
pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let chol = a.clone().cholesky()?;
    let mut x = chol.solve(b);
    let r = b - a * &x;
    x += chol.solve(&r);
    Some(x)
}

/// Numerical rank of the matrix with unit-normalized columns: number of
/// singular values above `RANK_REL_TOL` times the largest. Zero columns are
/// left in place (they contribute nothing).
pub(crate) fn normalized_column_rank(columns: &[DVector<f64>]) -> usize {
    if columns.is_empty() {
        return 0;
    }
    let p = columns[0].len();
    let mut m = DMatrix::<f64>::zeros(p, columns.len());
    for (j, c) in columns.iter().enumerate() {
        let n = c.norm();
        if n > 0.0 {
            m.set_column(j, &(c / n));
        }
    }
    let sv = m.singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_REL_TOL * smax).count()
}

/// Orthonormalize `columns` in the inner product defined by the SPD matrix
/// `sigma`, by modified Gram–Schmidt with one reorthogonalization pass.
///
/// Returns the orthonormal basis `B` and the upper-triangular `T` with
/// `U = B T`, where `U` holds the input columns scaled to unit Euclidean
/// norm. Fails with `None` when a column is numerically dependent on its
/// predecessors (pivot below `RANK_REL_TOL` of the column scale).
pub(crate) fn sigma_orthonormalize(
    columns: &[DVector<f64>],
    sigma: &DMatrix<f64>,
) -> Option<(Vec<DVector<f64>>, DMatrix<f64>)> {
    let a = columns.len();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(a);
    let mut t = DMatrix::<f64>::zeros(a, a);
    for (j, col) in columns.iter().enumerate() {
        let nrm = col.norm();
        if nrm <= 0.0 {
            return None;
        }
        let mut v = col / nrm;
        let scale0 = quad_form(&v, sigma, &v).sqrt();
        for _ in 0..2 {
            for (i, b) in basis.iter().enumerate() {
                let c = quad_form(b, sigma, &v);
                v -= c * b;
                t[(i, j)] += c;
            }
        }
        let pivot = quad_form(&v, sigma, &v).sqrt();
        if !pivot.is_finite() || pivot <= RANK_REL_TOL * scale0 {
            return None;
        }
        t[(j, j)] = pivot;
        basis.push(v / pivot);
    }
    Some((basis, t))
}

/// Back-substitution for upper-triangular `T x = z`.
pub(crate) fn solve_upper_triangular(t: &DMatrix<f64>, z: &DVector<f64>) -> DVector<f64> {
    let n = z.len();
    let mut x = DVector::zeros(n);
    for i in (0..n).rev() {
        let mut s = z[i];
        for j in (i + 1)..n {
            s -= t[(i, j)] * x[j];
        }
        x[i] = s / t[(i, i)];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_matches_exact_small_case() {
        let mut s = KahanSum::default();
        for _ in 0..10 {
            s.add(0.1);
        }
        assert!((s.value() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sigma_orthonormalize_gives_sigma_orthonormal_basis() {
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 0.5]));
        let cols = vec![
            DVector::from_vec(vec![1.0, 1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0, 1.0]),
        ];
        let (b, t) = sigma_orthonormalize(&cols, &sigma).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let g = quad_form(&b[i], &sigma, &b[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-12);
            }
        }
        // reconstruction: normalized cols = B T
        for j in 0..2 {
            let u = &cols[j] / cols[j].norm();
            let mut rec = DVector::zeros(3);
            for i in 0..2 {
                rec += t[(i, j)] * &b[i];
            }
            assert!((u - rec).norm() < 1e-12);
        }
    }

    #[test]
    fn rank_of_dependent_columns() {
        let c1 = DVector::from_vec(vec![1.0, 2.0]);
        let c2 = &c1 * 3.0;
        assert_eq!(normalized_column_rank(&[c1.clone(), c2]), 1);
        assert_eq!(normalized_column_rank(&[c1, DVector::zeros(2)]), 1);
    }
}
