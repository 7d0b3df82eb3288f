//! Gram-volume objectives, `Vol(Z) = √det(ZᵀZ) = Π σ_j`.

use super::{batch_shape, batch_svd, LossOutput};
use crate::error::{Error, Result};
use crate::linalg::{svd_sigma_backward, svd_thin, Matrix, SvdResult, EPS_NULL};
use crate::scalar::{log_sum_exp, Real};

pub fn gram_volume<T: Real>(z: &Matrix<T>) -> Result<T> {
    Ok(svd_thin(z)?.sigma.iter().fold(T::one(), |p, &s| p * s))
}

/// `∂Vol/∂σ_j = Π_{l≠j} σ_l`, or all zeros once two or more singular values
/// are below `EPS_NULL`.
pub fn volume_sigma_grad<T: Real>(sigma: &[T]) -> Vec<T> {
    let eps = T::lit(EPS_NULL);
    if sigma.iter().filter(|&&s| s < eps).count() >= 2 {
        return vec![T::zero(); sigma.len()];
    }
    (0..sigma.len())
        .map(|j| {
            sigma
                .iter()
                .enumerate()
                .filter(|&(l, _)| l != j)
                .fold(T::one(), |p, (_, &s)| p * s)
        })
        .collect()
}

fn volume_and_grad<T: Real>(svd: &SvdResult<T>, weight: T) -> Result<(T, Matrix<T>)> {
    let vol = svd.sigma.iter().fold(T::one(), |p, &s| p * s);
    let g: Vec<T> = volume_sigma_grad(&svd.sigma)
        .into_iter()
        .map(|x| x * weight)
        .collect();
    Ok((vol, svd_sigma_backward(svd, &g)?))
}

/// Mean Gram volume over the batch, `L = (1/N) Σ_i Vol(Z_i)`.
pub fn volume_only_loss<T: Real>(z_batch: &[Matrix<T>]) -> Result<LossOutput<T>> {
    batch_shape(z_batch)?;
    volume_only_from_svds(&batch_svd(z_batch)?)
}

pub fn volume_only_from_svds<T: Real>(svds: &[SvdResult<T>]) -> Result<LossOutput<T>> {
    if svds.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let inv_n = T::one() / T::from_usize_lossy(svds.len());
    let mut value = T::zero();
    let mut grads = Vec::with_capacity(svds.len());
    for svd in svds {
        let (vol, g) = volume_and_grad(svd, inv_n)?;
        value = value + vol;
        grads.push(g);
    }
    LossOutput::checked(value * inv_n, grads)
}

/// Anchor-based volume contrast. For instance `i`, the positive is `Z_i`
/// itself and the candidates are `Z_i` with its anchor column replaced by
/// instance `j`'s anchor column, scored by negative volume:
///
/// `L = −(1/N) Σ_i log( exp(−Vol(Z_i)/τ) / Σ_j exp(−Vol(Z_i^{[a←j]})/τ) )`.
///
/// A simplified stand-in for anchor-based volume training, used as a baseline.
pub fn volume_contrastive_loss<T: Real>(
    z_batch: &[Matrix<T>],
    anchor_slot: usize,
    tau: T,
) -> Result<LossOutput<T>> {
    let (d, k) = batch_shape(z_batch)?;
    let n = z_batch.len();
    if anchor_slot >= k {
        return Err(Error::BadAnchor {
            anchor: anchor_slot,
            k,
        });
    }
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    let anchors: Vec<Vec<T>> = z_batch.iter().map(|z| z.column(anchor_slot)).collect();

    let nf = T::from_usize_lossy(n);
    let mut value = T::zero();
    let mut grads = vec![Matrix::zeros(d, k); n];
    for i in 0..n {
        let mut vols = Vec::with_capacity(n);
        let mut vol_grads = Vec::with_capacity(n);
        for anchor in &anchors {
            let mut m = z_batch[i].clone();
            m.set_column(anchor_slot, anchor);
            let (v, g) = volume_and_grad(&svd_thin(&m)?, T::one())?;
            vols.push(v);
            vol_grads.push(g);
        }
        let logits: Vec<T> = vols.iter().map(|&v| -v / tau).collect();
        let lse = log_sum_exp(&logits);
        value = value + (lse - logits[i]);
        for j in 0..n {
            let p = (logits[j] - lse).exp();
            let coeff = -(p - if i == j { T::one() } else { T::zero() }) / (nf * tau);
            if coeff == T::zero() {
                continue;
            }
            let g = &vol_grads[j];
            for c in 0..k {
                let dst = if c == anchor_slot { j } else { i };
                for r in 0..d {
                    grads[dst][(r, c)] = grads[dst][(r, c)] + coeff * g[(r, c)];
                }
            }
        }
    }
    LossOutput::checked(value / nf, grads)
}
