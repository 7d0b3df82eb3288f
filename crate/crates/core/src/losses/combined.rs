use super::{
    batch_shape, batch_svd, check_unit_columns, instance_matching_loss,
    leading_direction_reg_from_svds, singular_loss_from_svds, LossConfig, LossOutput,
};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::model::{MatchingHead, MlpGrads};
use crate::scalar::Real;

/// Total objective plus the individual terms that went into it.
#[derive(Clone, Debug)]
pub struct CombinedOutput<T> {
    pub loss: LossOutput<T>,
    pub singular: T,
    /// `None` when `lambda1 = 0` (term not evaluated).
    pub regularizer: Option<T>,
    /// `None` when `lambda2 = 0` (term not evaluated).
    pub matching: Option<T>,
    /// Gradient of the total with respect to the head (zero without matching).
    pub head_grads: MlpGrads<T>,
}

/// `L = L_sv + λ₁·L_reg + λ₂·L_match`; terms with zero weight are skipped.
/// `seed` drives the hard-negative slot choice.
pub fn combined_loss<T: Real>(
    z_batch: &[Matrix<T>],
    head: &MatchingHead<T>,
    cfg: &LossConfig,
    seed: u64,
) -> Result<CombinedOutput<T>> {
    cfg.validate()?;
    batch_shape(z_batch)?;
    check_unit_columns(z_batch)?;
    let svds = batch_svd(z_batch)?;

    let sv = singular_loss_from_svds(&svds, T::lit(cfg.tau1))?;
    let mut value = sv.value;
    let mut grad_z = sv.grad_z;
    let mut head_grads = MlpGrads::zeros_like(&head.mlp);

    let regularizer = if cfg.lambda1 > 0.0 {
        let reg = leading_direction_reg_from_svds(&svds, T::lit(cfg.tau2))?;
        let w = T::lit(cfg.lambda1);
        value = value + w * reg.value;
        for (g, r) in grad_z.iter_mut().zip(&reg.grad_z) {
            g.add_assign_scaled(r, w);
        }
        Some(reg.value)
    } else {
        None
    };

    let matching = if cfg.lambda2 > 0.0 {
        let im = instance_matching_loss(z_batch, head, seed)?;
        let w = T::lit(cfg.lambda2);
        value = value + w * im.loss.value;
        for (g, r) in grad_z.iter_mut().zip(&im.loss.grad_z) {
            g.add_assign_scaled(r, w);
        }
        head_grads = im.head_grads;
        head_grads.scale(w);
        Some(im.loss.value)
    } else {
        None
    };

    Ok(CombinedOutput {
        loss: LossOutput::checked(value, grad_z)?,
        singular: sv.value,
        regularizer,
        matching,
        head_grads,
    })
}
