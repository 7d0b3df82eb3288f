use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

pub const MAX_JACOBI_SWEEPS: usize = 100;
const MAX_ORDER: usize = 16;
const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenpairs of a symmetric matrix, eigenvalues descending. Column `j` of
/// `vectors` belongs to `values[j]`.
#[derive(Clone, Debug)]
pub struct SymEig<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

/// Cyclic Jacobi eigendecomposition for small symmetric matrices.
pub fn sym_eig<T: Real>(s: &Matrix<T>) -> Result<SymEig<T>> {
    let n = s.rows();
    if n != s.cols() {
        return Err(Error::DimensionMismatch(format!(
            "sym_eig needs a square matrix, got {}x{}",
            n,
            s.cols()
        )));
    }
    if n > MAX_ORDER {
        return Err(Error::DimensionMismatch(format!(
            "sym_eig supports order <= {MAX_ORDER}, got {n}"
        )));
    }
    let asym = s.max_asymmetry();
    if asym > T::lit(SYMMETRY_TOL) {
        return Err(Error::NotSymmetric(asym.as_f64()));
    }

    let mut a = s.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (a[(i, j)] + a[(j, i)]) / T::lit(2.0);
            a[(i, j)] = avg;
            a[(j, i)] = avg;
        }
    }
    let mut q = Matrix::identity(n);
    let scale = a.frobenius_norm();
    let tol = T::epsilon() * scale;

    let mut converged = false;
    for _ in 0..MAX_JACOBI_SWEEPS {
        if off_diagonal_norm(&a) <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                rotate(&mut a, &mut q, p, r);
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > tol {
        return Err(Error::NotConverged(MAX_JACOBI_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap());
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &q.column(src));
    }
    Ok(SymEig { values, vectors })
}

fn off_diagonal_norm<T: Real>(a: &Matrix<T>) -> T {
    let n = a.rows();
    let mut s = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s = s + a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Zeroes `a[p][q]` with a plane rotation `J`, updating `a ← JᵀaJ`, `q ← qJ`.
fn rotate<T: Real>(a: &mut Matrix<T>, v: &mut Matrix<T>, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == T::zero() {
        return;
    }
    let (c, s) = jacobi_rotation(a[(p, p)], a[(q, q)], apq);
    let n = a.rows();
    for r in 0..n {
        let (x, y) = (a[(r, p)], a[(r, q)]);
        a[(r, p)] = c * x - s * y;
        a[(r, q)] = s * x + c * y;
    }
    for r in 0..n {
        let (x, y) = (a[(p, r)], a[(q, r)]);
        a[(p, r)] = c * x - s * y;
        a[(q, r)] = s * x + c * y;
    }
    a[(p, q)] = T::zero();
    a[(q, p)] = T::zero();
    for r in 0..v.rows() {
        let (x, y) = (v[(r, p)], v[(r, q)]);
        v[(r, p)] = c * x - s * y;
        v[(r, q)] = s * x + c * y;
    }
}

/// Cosine and sine of the rotation that diagonalizes `[[app, apq], [apq, aqq]]`,
/// taking the smaller of the two admissible angles.
pub(crate) fn jacobi_rotation<T: Real>(app: T, aqq: T, apq: T) -> (T, T) {
    let theta = (aqq - app) / (T::lit(2.0) * apq);
    let t = if theta.is_infinite() {
        T::zero()
    } else {
        let sign = if theta >= T::zero() {
            T::one()
        } else {
            -T::one()
        };
        sign / (theta.abs() + (theta * theta + T::one()).sqrt())
    };
    let c = T::one() / (t * t + T::one()).sqrt();
    (c, t * c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_pairs(s: &Matrix<f64>, e: &SymEig<f64>) {
        let n = s.rows();
        for j in 0..n {
            let qj = e.vectors.column(j);
            let sq = s.mat_vec(&qj);
            for i in 0..n {
                assert!((sq[i] - e.values[j] * qj[i]).abs() < 1e-8);
            }
        }
        let qtq = e.vectors.t_matmul(&e.vectors).unwrap();
        assert!(qtq.sub(&Matrix::identity(n)).max_abs() < 1e-12);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn identity_eigenvalues() {
        let s = Matrix::<f64>::identity(3);
        let e = sym_eig(&s).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        check_pairs(&s, &e);
    }

    #[test]
    fn two_by_two_closed_form() {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let s = Matrix::from_rows(&[vec![1.0, c], vec![c, 1.0]]).unwrap();
        let e = sym_eig(&s).unwrap();
        // closed form for [[1, c], [c, 1]]: 1 ± c
        assert!((e.values[0] - (1.0 + c)).abs() < 1e-14);
        assert!((e.values[1] - (1.0 - c)).abs() < 1e-14);
        assert!((e.values[0] - 1.7071068).abs() < 1e-7);
        assert!((e.values[1] - 0.2928932).abs() < 1e-7);
        check_pairs(&s, &e);
    }

    #[test]
    fn all_ones_is_rank_one() {
        let s = Matrix::from_rows(&vec![vec![1.0_f64; 3]; 3]).unwrap();
        let e = sym_eig(&s).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!(e.values[1].abs() < 1e-14 && e.values[2].abs() < 1e-14);
        check_pairs(&s, &e);
    }

    #[test]
    fn rejects_asymmetric() {
        let s = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&s), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn random_symmetric_16() {
        let n = 16;
        let mut s = Matrix::zeros(n, n);
        let mut x = 0.123_f64;
        for i in 0..n {
            for j in i..n {
                x = (x * 3.7 + 0.31).fract();
                s[(i, j)] = x - 0.5;
                s[(j, i)] = x - 0.5;
            }
        }
        let e = sym_eig(&s).unwrap();
        check_pairs(&s, &e);
        let trace: f64 = (0..n).map(|i| s[(i, i)]).sum();
        assert!((e.values.iter().sum::<f64>() - trace).abs() < 1e-12);
    }
}
