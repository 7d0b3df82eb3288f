//! Training objectives over batches of per-instance representation matrices
//! `Z ∈ ℝ^{d×k}` (one unit-norm column per modality), each returning its
//! value together with `∂L/∂Z` for every instance.

mod combined;
mod infonce;
mod matching;
mod regularizer;
mod singular;
mod volume;

pub use combined::{combined_loss, CombinedOutput};
pub use infonce::{multimodal_infonce, pairwise_infonce, PairLossOutput};
pub use matching::{
    binary_cross_entropy, hard_negatives, instance_matching_loss, HardNegative, MatchingOutput,
};
pub use regularizer::{leading_direction_reg, leading_direction_reg_from_svds};
pub use singular::{pmrl_singular_loss, singular_loss_from_svds};
pub use volume::{
    gram_volume, volume_contrastive_loss, volume_only_from_svds, volume_only_loss,
    volume_sigma_grad,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{svd_thin, Matrix, SvdResult};
use crate::scalar::Real;

/// Tolerance on column norms accepted as "unit".
pub const UNIT_TOL: f64 = 1e-6;

/// Loss value and one gradient matrix per input instance.
#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput<T> {
    pub value: T,
    pub grad_z: Vec<Matrix<T>>,
}

impl<T: Real> LossOutput<T> {
    pub(crate) fn checked(value: T, grad_z: Vec<Matrix<T>>) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite("loss value".into()));
        }
        if grad_z.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("loss gradient".into()));
        }
        Ok(Self { value, grad_z })
    }
}

/// Temperatures and weights of the combined objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub tau1: f64,
    pub tau2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau1: 0.05,
            tau2: 0.1,
            lambda1: 1.0,
            lambda2: 0.1,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau1 > 0.0 && self.tau2 > 0.0) {
            return Err(Error::ConfigInvalid("temperatures must be positive".into()));
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::ConfigInvalid(
                "loss weights must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Common `(d, k)` of a nonempty batch.
pub(crate) fn batch_shape<T: Real>(z_batch: &[Matrix<T>]) -> Result<(usize, usize)> {
    let first = z_batch.first().ok_or(Error::EmptyBatch)?;
    let shape = first.shape();
    if let Some(bad) = z_batch.iter().find(|z| z.shape() != shape) {
        return Err(Error::DimensionMismatch(format!(
            "batch mixes {:?} and {:?}",
            shape,
            bad.shape()
        )));
    }
    Ok(shape)
}

pub(crate) fn check_unit_columns<T: Real>(z_batch: &[Matrix<T>]) -> Result<()> {
    let tol = T::lit(UNIT_TOL);
    for (i, z) in z_batch.iter().enumerate() {
        for j in 0..z.cols() {
            let n = z.column_norm(j);
            if (n - T::one()).abs() > tol {
                return Err(Error::NonUnitColumns {
                    instance: i,
                    column: j,
                    norm: n.as_f64(),
                });
            }
        }
    }
    Ok(())
}

pub fn batch_svd<T: Real>(z_batch: &[Matrix<T>]) -> Result<Vec<SvdResult<T>>> {
    z_batch.iter().map(svd_thin).collect()
}
