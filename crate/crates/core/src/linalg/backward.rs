use super::{Matrix, SvdResult, EPS_DEG, EPS_NULL};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Pulls upstream gradients on `(U, σ, V)` back to `Z` for the thin SVD:
///
/// ```text
/// Z̄ = U [ (F∘(UᵀŪ − ŪᵀU)) Σ + Σ (F∘(VᵀV̄ − V̄ᵀV)) + diag(σ̄) ] Vᵀ
///     + (I − UUᵀ) Ū Σ⁺ Vᵀ
/// F_ij = 1 / (σ_j² − σ_i²),  F_ii = 0
/// ```
///
/// Denominators smaller than `EPS_DEG` in magnitude are clamped to `±EPS_DEG`;
/// for `i < j` a zero gap is treated as negative, matching the descending order.
pub fn svd_backward<T: Real>(
    svd: &SvdResult<T>,
    grad_u: &Matrix<T>,
    grad_sigma: &[T],
    grad_v: &Matrix<T>,
) -> Result<Matrix<T>> {
    let u = &svd.u;
    let v = &svd.v;
    let sigma = &svd.sigma;
    let (d, k) = u.shape();
    if grad_u.shape() != (d, k) || grad_v.shape() != (k, k) || grad_sigma.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "svd_backward: U is {d}x{k}, got grad_u {:?}, grad_sigma {}, grad_v {:?}",
            grad_u.shape(),
            grad_sigma.len(),
            grad_v.shape()
        )));
    }

    let f = gap_matrix(sigma);
    let ut_gu = u.t_matmul(grad_u)?;
    let vt_gv = v.t_matmul(grad_v)?;

    let mut inner = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if i == j {
                inner[(i, i)] = grad_sigma[i];
                continue;
            }
            let ju = ut_gu[(i, j)] - ut_gu[(j, i)];
            let jv = vt_gv[(i, j)] - vt_gv[(j, i)];
            inner[(i, j)] = f[(i, j)] * (ju * sigma[j] + sigma[i] * jv);
        }
    }
    let mut out = u.matmul(&inner)?.matmul(&v.transpose())?;

    // (I − UUᵀ) Ū Σ⁺ Vᵀ
    let eps_null = T::lit(EPS_NULL);
    let mut scaled = grad_u.clone();
    for j in 0..k {
        let inv = if sigma[j] >= eps_null {
            T::one() / sigma[j]
        } else {
            T::zero()
        };
        for i in 0..d {
            scaled[(i, j)] = scaled[(i, j)] * inv;
        }
    }
    let projected = scaled.sub(&u.matmul(&u.t_matmul(&scaled)?)?);
    out.add_assign_scaled(&projected.matmul(&v.transpose())?, T::one());

    if !out.is_finite() {
        return Err(Error::NonFinite("svd_backward output".into()));
    }
    Ok(out)
}

/// Backward pass when only `σ` carries gradient: `Σ_j σ̄_j u_j v_jᵀ`.
pub fn svd_sigma_backward<T: Real>(svd: &SvdResult<T>, grad_sigma: &[T]) -> Result<Matrix<T>> {
    let (d, k) = svd.u.shape();
    svd_backward(svd, &Matrix::zeros(d, k), grad_sigma, &Matrix::zeros(k, k))
}

fn gap_matrix<T: Real>(sigma: &[T]) -> Matrix<T> {
    let k = sigma.len();
    let eps = T::lit(EPS_DEG);
    let mut f = Matrix::zeros(k, k);
    for i in 0..k {
        for j in (i + 1)..k {
            let mut den = sigma[j] * sigma[j] - sigma[i] * sigma[i];
            if den.abs() < eps {
                den = if den > T::zero() { eps } else { -eps };
            }
            f[(i, j)] = T::one() / den;
            f[(j, i)] = -T::one() / den;
        }
    }
    f
}
