use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{batch_shape, LossOutput};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{sigmoid, MatchingHead, MlpGrads};
use crate::scalar::{dot, Real};

/// Negative tuple for one instance: its own representations with slot `slot`
/// taken from instance `donor`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HardNegative {
    pub slot: usize,
    pub donor: usize,
}

#[derive(Clone, Debug)]
pub struct MatchingOutput<T> {
    pub loss: LossOutput<T>,
    pub head_grads: MlpGrads<T>,
    pub negatives: Vec<HardNegative>,
}

/// One hard negative per instance. The replaced slot is drawn uniformly from
/// a stream seeded with `seed`; the donor is the other instance whose
/// representation in that slot is most similar (lowest index on ties).
pub fn hard_negatives<T: Real>(z_batch: &[Matrix<T>], seed: u64) -> Result<Vec<HardNegative>> {
    let (_, k) = batch_shape(z_batch)?;
    let n = z_batch.len();
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    let cols: Vec<Vec<Vec<T>>> = z_batch.iter().map(Matrix::columns).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|i| {
            let slot = rng.gen_range(0..k);
            let mut donor = usize::MAX;
            let mut best = T::neg_infinity();
            for j in (0..n).filter(|&j| j != i) {
                let s = dot(&cols[i][slot], &cols[j][slot]);
                if s > best {
                    best = s;
                    donor = j;
                }
            }
            HardNegative { slot, donor }
        })
        .collect())
}

/// Binary cross-entropy of the matching head over one positive tuple (the
/// instance's own `k` representations, label 1) and one hard negative
/// (label 0) per instance. Tuples are the column-wise concatenation
/// `[z¹; z²; …; zᵏ]`. Returns gradients for the head and for every
/// contributing representation matrix; the negative's replaced slot sends its
/// gradient to the donor.
pub fn instance_matching_loss<T: Real>(
    z_batch: &[Matrix<T>],
    head: &MatchingHead<T>,
    seed: u64,
) -> Result<MatchingOutput<T>> {
    let (d, k) = batch_shape(z_batch)?;
    let n = z_batch.len();
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    if head.input_dim() != k * d {
        return Err(Error::DimensionMismatch(format!(
            "head expects {} inputs, tuples have {}",
            head.input_dim(),
            k * d
        )));
    }
    let negatives = hard_negatives(z_batch, seed)?;
    let cols: Vec<Vec<Vec<T>>> = z_batch.iter().map(Matrix::columns).collect();

    let count = T::from_usize_lossy(2 * n);
    let mut value = T::zero();
    let mut head_grads = MlpGrads::zeros_like(&head.mlp);
    let mut grad_z: Vec<Matrix<T>> = vec![Matrix::zeros(d, k); n];

    for i in 0..n {
        let neg = negatives[i];
        for label in [T::one(), T::zero()] {
            let positive = label == T::one();
            let source = |m: usize| {
                if !positive && m == neg.slot {
                    neg.donor
                } else {
                    i
                }
            };
            let tuple: Vec<T> = (0..k)
                .flat_map(|m| cols[source(m)][m].iter().copied())
                .collect();
            let (logit, cache) = head.logit(&tuple)?;
            value = value + bce_with_logit(logit, label);
            let dlogit = (sigmoid(logit) - label) / count;
            let (g, gx) = head.mlp.backward(&cache, &[dlogit])?;
            head_grads.accumulate(&g);
            for m in 0..k {
                let dst = &mut grad_z[source(m)];
                for r in 0..d {
                    dst[(r, m)] = dst[(r, m)] + gx[m * d + r];
                }
            }
        }
    }
    Ok(MatchingOutput {
        loss: LossOutput::checked(value / count, grad_z)?,
        head_grads,
        negatives,
    })
}

/// `−[y log σ(ℓ) + (1−y) log(1−σ(ℓ))]` computed from the logit.
fn bce_with_logit<T: Real>(logit: T, label: T) -> T {
    let softplus = logit.max(T::zero()) + (-logit.abs()).exp().ln_1p();
    softplus - label * logit
}

/// Mean binary cross-entropy from probabilities, clamped away from 0 and 1.
pub fn binary_cross_entropy<T: Real>(probs: &[T], labels: &[T]) -> Result<T> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch(probs.len(), labels.len()));
    }
    if probs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let eps = T::lit(1e-15);
    let s: T = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.max(eps).min(T::one() - eps);
            -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
        })
        .sum();
    Ok(s / T::from_usize_lossy(probs.len()))
}
