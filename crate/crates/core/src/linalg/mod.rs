//! Small dense linear algebra: Gram matrices, symmetric Jacobi
//! eigendecomposition, thin SVD with deterministic signs, and the matrix
//! backpropagation rule for the thin SVD.

mod backward;
mod eig;
mod matrix;
mod svd;

pub use backward::{svd_backward, svd_sigma_backward};
pub use eig::{sym_eig, SymEig, MAX_JACOBI_SWEEPS};
pub use matrix::Matrix;
pub use svd::{min_spectral_gap, svd_thin, SvdResult};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Singular values below this are treated as zero (pseudo-inverse, U completion).
pub const EPS_NULL: f64 = 1e-10;
/// Minimum magnitude of `σ_j² − σ_i²` in the SVD backward pass.
pub const EPS_DEG: f64 = 1e-8;
/// Columns with a norm below this cannot be normalized.
pub const ZERO_COLUMN_NORM: f64 = 1e-12;

/// Scales every column to unit Euclidean norm.
pub fn normalize_columns<T: Real>(m: &Matrix<T>) -> Result<Matrix<T>> {
    let mut out = m.clone();
    for j in 0..m.cols() {
        let n = m.column_norm(j);
        if n < T::lit(ZERO_COLUMN_NORM) {
            return Err(Error::ZeroColumn(j));
        }
        for i in 0..m.rows() {
            out[(i, j)] = m[(i, j)] / n;
        }
    }
    Ok(out)
}

/// `ZᵀZ` for a matrix whose columns are modality embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix<T>(Matrix<T>);

impl<T: Real> GramMatrix<T> {
    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }

    pub fn k(&self) -> usize {
        self.0.rows()
    }

    /// Mean of the strictly upper-triangular entries: the average pairwise
    /// cosine when the columns are unit-norm.
    pub fn mean_off_diagonal(&self) -> T {
        let k = self.k();
        let mut s = T::zero();
        for i in 0..k {
            for j in (i + 1)..k {
                s = s + self.0[(i, j)];
            }
        }
        s / T::from_usize_lossy(k * (k - 1) / 2)
    }

    pub fn min_off_diagonal(&self) -> T {
        let k = self.k();
        let mut m = T::infinity();
        for i in 0..k {
            for j in (i + 1)..k {
                m = m.min(self.0[(i, j)]);
            }
        }
        m
    }
}

/// Gram matrix of the columns of `z`. Symmetric by construction.
pub fn gram<T: Real>(z: &Matrix<T>) -> Result<GramMatrix<T>> {
    if z.cols() < 2 {
        return Err(Error::DimensionMismatch(format!(
            "gram needs at least 2 columns, got {}",
            z.cols()
        )));
    }
    let mut g = z.t_matmul(z)?;
    for i in 0..g.rows() {
        for j in (i + 1)..g.cols() {
            g[(j, i)] = g[(i, j)];
        }
    }
    Ok(GramMatrix(g))
}

/// Number of singular values strictly above `threshold · σ₁`.
pub fn effective_rank<T: Real>(sigma: &[T], threshold: T) -> usize {
    match sigma.first() {
        Some(&s1) if s1 > T::zero() => sigma.iter().filter(|&&s| s > threshold * s1).count(),
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }

    #[test]
    fn normalize_scales_to_unit() {
        let m = Matrix::from_columns(&[col(&[3.0, 4.0, 0.0])]).unwrap();
        let n = normalize_columns(&m).unwrap();
        assert_eq!(n.column(0), vec![0.6, 0.8, 0.0]);

        let e = Matrix::from_columns(&[col(&[1.0, 0.0]), col(&[0.0, 1.0])]).unwrap();
        assert_eq!(normalize_columns(&e).unwrap(), e);
    }

    #[test]
    fn normalize_rejects_zero_column() {
        let m = Matrix::from_columns(&[col(&[1e-15, 0.0])]).unwrap();
        assert!(matches!(normalize_columns(&m), Err(Error::ZeroColumn(0))));
    }

    #[test]
    fn gram_examples() {
        let same = Matrix::from_columns(&vec![col(&[0.0, 1.0, 0.0]); 3]).unwrap();
        let g = gram(&same).unwrap();
        assert!(g.matrix().data().iter().all(|&x| x == 1.0));

        let e = Matrix::from_columns(&[col(&[1.0, 0.0]), col(&[0.0, 1.0])]).unwrap();
        assert_eq!(gram(&e).unwrap().into_matrix(), Matrix::identity(2));

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let z = Matrix::from_columns(&[col(&[1.0, 0.0]), col(&[h, h])]).unwrap();
        let g = gram(&z).unwrap();
        // independent oracle: explicit dot products of the two columns
        let oracle: f64 = [1.0, 0.0].iter().zip([h, h]).map(|(a, b)| a * b).sum();
        assert!((g.matrix()[(0, 1)] - oracle).abs() < 1e-15);
        assert!((g.matrix()[(0, 1)] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-7);
        assert_eq!(g.matrix()[(0, 1)], g.matrix()[(1, 0)]);
    }

    #[test]
    fn gram_needs_two_columns() {
        let z = Matrix::from_columns(&[col(&[1.0, 0.0])]).unwrap();
        assert!(matches!(gram(&z), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn effective_rank_examples() {
        let s3 = 3f64.sqrt();
        assert_eq!(effective_rank(&[s3, 0.0, 0.0], 0.01), 1);
        assert_eq!(effective_rank(&[1.0, 1.0], 0.01), 2);
        assert_eq!(effective_rank(&[1.3065630, 0.5411961], 0.5), 1);
        assert_eq!(effective_rank(&[0.0, 0.0], 0.5), 0);
    }
}
