use serde::{Deserialize, Serialize};

use super::eig::{jacobi_rotation, MAX_JACOBI_SWEEPS};
use super::{Matrix, EPS_NULL};
use crate::error::{Error, Result};
use crate::scalar::{dot, Real};

const SIGN_TOL: f64 = 1e-12;

/// Thin SVD `Z = U·diag(sigma)·Vᵀ` of a d×k matrix with d ≥ k.
///
/// Singular values are descending. Signs are canonical: each `v_j` has a
/// nonnegative entry sum, and when that sum vanishes the first clearly
/// nonzero entry of `u_j` is positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvdResult<T> {
    pub u: Matrix<T>,
    pub sigma: Vec<T>,
    pub v: Matrix<T>,
}

impl<T: Real> SvdResult<T> {
    pub fn k(&self) -> usize {
        self.sigma.len()
    }

    /// Leading left singular vector `u₁`.
    pub fn leading_direction(&self) -> Vec<T> {
        self.u.column(0)
    }

    pub fn reconstruct(&self) -> Matrix<T> {
        let mut out = Matrix::zeros(self.u.rows(), self.v.rows());
        for (j, &s) in self.sigma.iter().enumerate() {
            out.add_outer(&self.u.column(j), &self.v.column(j), s);
        }
        out
    }
}

/// Smallest distance between two distinct singular values.
pub fn min_spectral_gap<T: Real>(sigma: &[T]) -> T {
    sigma
        .windows(2)
        .map(|w| (w[0] - w[1]).abs())
        .fold(T::infinity(), T::min)
}

/// Thin SVD by one-sided Jacobi: the columns of `Z` are rotated pairwise with
/// the Jacobi rotation of the corresponding 2×2 block of `ZᵀZ` until they are
/// mutually orthogonal. The accumulated rotations are `V`, the column norms
/// are `σ`, and the normalized columns are `U`.
pub fn svd_thin<T: Real>(z: &Matrix<T>) -> Result<SvdResult<T>> {
    let (d, k) = z.shape();
    if k < 2 || d < k {
        return Err(Error::DimensionMismatch(format!(
            "svd_thin needs d >= k >= 2, got {d}x{k}"
        )));
    }

    // column-major working copies for cache-friendly rotations
    let mut w: Vec<Vec<T>> = z.columns();
    let mut v: Vec<Vec<T>> = (0..k)
        .map(|j| {
            (0..k)
                .map(|i| if i == j { T::one() } else { T::zero() })
                .collect()
        })
        .collect();
    let tol = T::epsilon() * T::from_usize_lossy(k);

    let mut converged = false;
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..k {
            for q in (p + 1)..k {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                let scale = (alpha * beta).sqrt();
                if gamma == T::zero() || gamma.abs() <= tol * scale {
                    continue;
                }
                rotated = true;
                let (c, s) = jacobi_rotation(alpha, beta, gamma);
                rotate_pair(&mut w, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged(MAX_JACOBI_SWEEPS));
    }

    let norms: Vec<T> = w.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());

    let sigma: Vec<T> = order.iter().map(|&i| norms[i]).collect();
    let mut u_cols: Vec<Vec<T>> = Vec::with_capacity(k);
    let mut v_cols: Vec<Vec<T>> = order.iter().map(|&i| v[i].clone()).collect();
    let eps_null = T::lit(EPS_NULL);
    for (j, &src) in order.iter().enumerate() {
        if sigma[j] >= eps_null {
            u_cols.push(w[src].iter().map(|&x| x / sigma[j]).collect());
        } else {
            u_cols.push(complete_basis(&u_cols, d));
        }
    }

    for j in 0..k {
        if canonical_flip(&u_cols[j], &v_cols[j]) {
            u_cols[j].iter_mut().for_each(|x| *x = -*x);
            v_cols[j].iter_mut().for_each(|x| *x = -*x);
        }
    }

    Ok(SvdResult {
        u: Matrix::from_columns(&u_cols)?,
        sigma,
        v: Matrix::from_columns(&v_cols)?,
    })
}

fn rotate_pair<T: Real>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Next unit vector orthogonal to `basis`, taken from the standard basis
/// scanned in index order. Two Gram–Schmidt passes.
fn complete_basis<T: Real>(basis: &[Vec<T>], d: usize) -> Vec<T> {
    // some e_c always keeps a residual of squared norm >= 1/d
    let accept = T::lit(0.5) / T::from_usize_lossy(d);
    let mut best: Option<(T, Vec<T>)> = None;
    for c in 0..d {
        let mut r = vec![T::zero(); d];
        r[c] = T::one();
        for _ in 0..2 {
            for b in basis {
                let proj = dot(b, &r);
                for (ri, &bi) in r.iter_mut().zip(b) {
                    *ri = *ri - proj * bi;
                }
            }
        }
        let n2 = dot(&r, &r);
        if n2 >= accept {
            let n = n2.sqrt();
            return r.into_iter().map(|x| x / n).collect();
        }
        if best.as_ref().is_none_or(|(m, _)| n2 > *m) {
            best = Some((n2, r));
        }
    }
    let (n2, r) = best.expect("d >= 1");
    let n = n2.sqrt();
    r.into_iter().map(|x| x / n).collect()
}

fn canonical_flip<T: Real>(u: &[T], v: &[T]) -> bool {
    let s: T = v.iter().copied().sum();
    let tol = T::lit(SIGN_TOL);
    if s.abs() >= tol {
        return s < T::zero();
    }
    u.iter()
        .find(|x| x.abs() > tol)
        .is_some_and(|&x| x < T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gram, sym_eig};

    fn check_invariants(z: &Matrix<f64>, svd: &SvdResult<f64>) {
        let k = svd.k();
        assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
        assert!(svd.sigma.iter().all(|&s| s >= 0.0));
        for (m, tol) in [(&svd.u, 1e-9), (&svd.v, 1e-9)] {
            let g = m.t_matmul(m).unwrap();
            for i in 0..k {
                assert!((g[(i, i)] - 1.0).abs() < tol);
                for j in 0..k {
                    if i != j {
                        assert!(
                            g[(i, j)].abs() < 1e-8,
                            "orthogonality {i} {j}: {}",
                            g[(i, j)]
                        );
                    }
                }
            }
        }
        let err = z.sub(&svd.reconstruct()).frobenius_norm();
        assert!(err <= 1e-8 * z.frobenius_norm().max(1.0));
        for j in 0..k {
            let s: f64 = svd.v.column(j).iter().sum();
            assert!(s >= 0.0 || s.abs() < 1e-12);
        }
    }

    fn cols(c: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_columns(&c.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn identical_columns() {
        let z = cols(&[&[0.0, 0.6, 0.8], &[0.0, 0.6, 0.8], &[0.0, 0.6, 0.8]]);
        let svd = svd_thin(&z).unwrap();
        assert!((svd.sigma[0] - 3f64.sqrt()).abs() < 1e-12);
        assert!((svd.sigma[0] - 1.7320508).abs() < 1e-7);
        assert!(svd.sigma[1] < 1e-12 && svd.sigma[2] < 1e-12);
        check_invariants(&z, &svd);
        // u₁ points at the shared column
        assert!((dot(&svd.u.column(0), &z.column(0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthonormal_columns() {
        let z = cols(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let svd = svd_thin(&z).unwrap();
        assert_eq!(svd.sigma, vec![1.0, 1.0]);
        check_invariants(&z, &svd);
    }

    #[test]
    fn forty_five_degree_pair() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let z = cols(&[&[1.0, 0.0], &[h, h]]);
        let svd = svd_thin(&z).unwrap();
        // oracle: square roots of the eigenvalues of the 2×2 Gram matrix
        let e = sym_eig(gram(&z).unwrap().matrix()).unwrap();
        assert!((svd.sigma[0] - e.values[0].sqrt()).abs() < 1e-12);
        assert!((svd.sigma[1] - e.values[1].sqrt()).abs() < 1e-12);
        assert!((svd.sigma[0] - 1.3065630).abs() < 1e-7);
        assert!((svd.sigma[1] - 0.5411961).abs() < 1e-7);
        check_invariants(&z, &svd);
    }

    #[test]
    fn rejects_wide_matrices() {
        let z = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(svd_thin(&z), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn zero_matrix_gets_completed_basis() {
        let z = Matrix::<f64>::zeros(4, 3);
        let svd = svd_thin(&z).unwrap();
        assert_eq!(svd.sigma, vec![0.0; 3]);
        check_invariants(&z, &svd);
    }

    #[test]
    fn sign_falls_back_to_u_when_v_sums_to_zero() {
        // columns (1,0) and (-1,0): v₁ ∝ (1,-1), sum zero
        let z = cols(&[&[0.0, 1.0, 0.0], &[0.0, -1.0, 0.0]]);
        let svd = svd_thin(&z).unwrap();
        let u1 = svd.u.column(0);
        let first = u1.iter().find(|x| x.abs() > 1e-12).unwrap();
        assert!(*first > 0.0);
        check_invariants(&z, &svd);
    }

    #[test]
    fn works_in_single_precision() {
        let z = Matrix::from_columns(&[vec![1.0_f32, 0.0, 0.0], vec![0.6, 0.8, 0.0]]).unwrap();
        let svd = svd_thin(&z).unwrap();
        let total: f32 = svd.sigma.iter().map(|s| s * s).sum();
        assert!((total - 2.0).abs() < 1e-5);
        assert!(z.sub(&svd.reconstruct()).frobenius_norm() < 1e-5);
    }
}
