use super::{batch_shape, batch_svd, LossOutput};
use crate::error::{Error, Result};
use crate::linalg::{svd_backward, Matrix, SvdResult};
use crate::scalar::{dot, Real};

/// Instance-wise contrast between leading directions:
///
/// `L = −(1/N) Σ_i log( exp(u_iᵀu_i/τ₂) / Σ_j exp(u_iᵀu_j/τ₂) )`
///
/// with `u_i` the sign-canonical `u₁` of instance `i` and the denominator
/// running over the whole batch. The gradient on each `u_i` is projected onto
/// the tangent space of the unit sphere and pulled back through the SVD.
pub fn leading_direction_reg<T: Real>(z_batch: &[Matrix<T>], tau2: T) -> Result<LossOutput<T>> {
    batch_shape(z_batch)?;
    if z_batch.len() < 2 {
        return Err(Error::BatchTooSmall(z_batch.len()));
    }
    leading_direction_reg_from_svds(&batch_svd(z_batch)?, tau2)
}

pub fn leading_direction_reg_from_svds<T: Real>(
    svds: &[SvdResult<T>],
    tau2: T,
) -> Result<LossOutput<T>> {
    let n = svds.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    if !(tau2 > T::zero()) {
        return Err(Error::ConfigInvalid("tau2 must be positive".into()));
    }
    let dirs: Vec<Vec<T>> = svds.iter().map(SvdResult::leading_direction).collect();
    let d = dirs[0].len();

    // off-diagonal probabilities only; each row is written relative to its
    // self-similarity so tiny losses keep their precision
    let mut probs = vec![vec![T::zero(); n]; n];
    let mut value = T::zero();
    for i in 0..n {
        let self_sim = dot(&dirs[i], &dirs[i]);
        let rel: Vec<T> = (0..n)
            .map(|j| ((dot(&dirs[i], &dirs[j]) - self_sim) / tau2).exp())
            .collect();
        let tail: T = (0..n).filter(|&j| j != i).map(|j| rel[j]).sum();
        value = value + tail.ln_1p();
        for j in 0..n {
            if j != i {
                probs[i][j] = rel[j] / (T::one() + tail);
            }
        }
    }
    let nf = T::from_usize_lossy(n);
    let scale = T::one() / (nf * tau2);

    let mut grads = Vec::with_capacity(n);
    for a in 0..n {
        let mut g = vec![T::zero(); d];
        for j in (0..n).filter(|&j| j != a) {
            let w = (probs[a][j] + probs[j][a]) * scale;
            for (gi, &uj) in g.iter_mut().zip(&dirs[j]) {
                *gi = *gi + w * uj;
            }
        }
        // the self terms only move u_a radially, which the projection drops
        let radial = dot(&g, &dirs[a]);
        for (gi, &ua) in g.iter_mut().zip(&dirs[a]) {
            *gi = *gi - radial * ua;
        }
        let k = svds[a].k();
        let mut grad_u = Matrix::zeros(d, k);
        grad_u.set_column(0, &g);
        grads.push(svd_backward(
            &svds[a],
            &grad_u,
            &vec![T::zero(); k],
            &Matrix::zeros(k, k),
        )?);
    }
    LossOutput::checked(value / nf, grads)
}
