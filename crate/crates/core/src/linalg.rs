use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Smallest accepted squared pivot, relative to the largest diagonal entry.
/// Matrices whose factorization produces a smaller pivot are treated as
/// singular.
pub const PIVOT_REL_TOL: f64 = 1e-12;

/// Lower Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    inner: Cholesky<f64, Dyn>,
}

impl CholeskyFactor {
    /// Returns `None` if the matrix is not numerically positive definite.
    pub fn new(m: &DMatrix<f64>) -> Option<Self> {
        let max_diag = m.diagonal().max();
        if !(max_diag.is_finite() && max_diag > 0.0) {
            return None;
        }
        let inner = Cholesky::new(m.clone())?;
        let min_pivot = inner.l_dirty().diagonal().iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if min_pivot * min_pivot <= PIVOT_REL_TOL * max_diag {
            return None;
        }
        Some(Self { inner })
    }

    pub fn dim(&self) -> usize {
        self.inner.l_dirty().nrows()
    }

    pub fn l(&self) -> DMatrix<f64> {
        self.inner.l()
    }

    /// `log det(M) = 2 Σ log L_ii`
    pub fn log_det(&self) -> f64 {
        2.0 * self.inner.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.inner.solve(b)
    }

    /// `L⁻¹ b`
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        self.inner
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("cholesky diagonal is nonzero")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.inner.inverse()
    }
}

/// Result of the first-come rank-revealing factorization: rows are visited
/// in order and a row whose residual variance after projection onto the
/// already accepted rows is at most `tol` is marked dependent.
#[derive(Clone, Debug)]
pub(crate) struct RankRevealed {
    pub pivots: Vec<usize>,
    pub dependent: Vec<usize>,
    /// Lower factor of the pivot block, in pivot order.
    pub pivot_factor: DMatrix<f64>,
}

pub(crate) fn rank_revealing_cholesky(m: &DMatrix<f64>, tol: f64) -> RankRevealed {
    let n = m.nrows();
    let mut pivots: Vec<usize> = Vec::with_capacity(n);
    let mut dependent = Vec::new();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let r = pivots.len();
        // w = L_P⁻¹ M[P, j] by forward substitution
        let mut w = vec![0.0; r];
        for a in 0..r {
            let mut s = m[(pivots[a], j)];
            for b in 0..a {
                s -= l[(a, b)] * w[b];
            }
            w[a] = s / l[(a, a)];
        }
        let residual = m[(j, j)] - w.iter().map(|v| v * v).sum::<f64>();
        if residual <= tol {
            dependent.push(j);
            continue;
        }
        for (b, wb) in w.iter().enumerate() {
            l[(r, b)] = *wb;
        }
        l[(r, r)] = residual.sqrt();
        pivots.push(j);
    }
    let r = pivots.len();
    let pivot_factor = l.view((0, 0), (r, r)).into_owned();
    RankRevealed {
        pivots,
        dependent,
        pivot_factor,
    }
}

/// Solves `(L Lᵀ) x = b` for a lower-triangular `l`.
pub(crate) fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let y = l.solve_lower_triangular(b).expect("nonzero diagonal");
    l.transpose().solve_upper_triangular(&y).expect("nonzero diagonal")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_solves_and_log_det() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.4, 2.0, 3.0, 0.5, 0.4, 0.5, 2.0]);
        let f = CholeskyFactor::new(&m).unwrap();
        let l = f.l();
        assert!((&l * l.transpose() - &m).norm() <= 1e-10 * m.norm());
        assert!((f.log_det() - m.determinant().ln()).abs() < 1e-12);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert!((&m * f.solve(&b) - &b).norm() < 1e-12);
    }

    #[test]
    fn singular_matrix_rejected() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        assert!(CholeskyFactor::new(&m).is_none());
        assert!(CholeskyFactor::new(&DMatrix::zeros(2, 2)).is_none());
    }

    #[test]
    fn rank_revealing_marks_later_duplicates() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 0.5]);
        let m = &a * a.transpose();
        let rr = rank_revealing_cholesky(&m, 1e-10);
        assert_eq!(rr.pivots, vec![0, 1]);
        assert_eq!(rr.dependent, vec![2, 3]);
        let c = cholesky_solve(&rr.pivot_factor, &DVector::from_vec(vec![m[(0, 2)], m[(1, 2)]]));
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 1.0).abs() < 1e-12);
    }
}
