use super::{batch_shape, batch_svd, check_unit_columns, LossOutput};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, SvdResult};
use crate::scalar::{log_sum_exp, Real};

/// Softmax cross-entropy over each instance's singular values with `σ₁` as
/// the target class:
///
/// `L = −(1/N) Σ_i log softmax(σ⁽ⁱ⁾/τ₁)₁`,
/// `∂L/∂Z_i = (1/(Nτ₁)) [ (p₁ − 1) u₁v₁ᵀ + Σ_{j≥2} p_j u_j v_jᵀ ]`.
pub fn pmrl_singular_loss<T: Real>(z_batch: &[Matrix<T>], tau1: T) -> Result<LossOutput<T>> {
    batch_shape(z_batch)?;
    check_unit_columns(z_batch)?;
    singular_loss_from_svds(&batch_svd(z_batch)?, tau1)
}

/// Same objective evaluated on precomputed decompositions. No unit-norm check.
pub fn singular_loss_from_svds<T: Real>(svds: &[SvdResult<T>], tau1: T) -> Result<LossOutput<T>> {
    if svds.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if !(tau1 > T::zero()) {
        return Err(Error::ConfigInvalid("tau1 must be positive".into()));
    }
    let n = T::from_usize_lossy(svds.len());
    let scale = T::one() / (n * tau1);
    let mut value = T::zero();
    let mut grads = Vec::with_capacity(svds.len());
    for svd in svds {
        let logits: Vec<T> = svd.sigma.iter().map(|&s| s / tau1).collect();
        // σ₁ is the largest logit, so −log p₁ = log(1 + Σ_{j≥2} e^{l_j − l_1})
        let tail: T = logits[1..].iter().map(|&l| (l - logits[0]).exp()).sum();
        value = value + tail.ln_1p();
        let lse = log_sum_exp(&logits);
        let p: Vec<T> = logits.iter().map(|&l| (l - lse).exp()).collect();
        // 1 − p₁ summed from the tail so it survives when p₁ rounds to 1
        let rest: T = p[1..].iter().copied().sum();

        let mut g = Matrix::zeros(svd.u.rows(), svd.v.rows());
        let u = svd.u.columns();
        let v = svd.v.columns();
        g.add_outer(&u[0], &v[0], -rest * scale);
        for j in 1..p.len() {
            g.add_outer(&u[j], &v[j], p[j] * scale);
        }
        grads.push(g);
    }
    LossOutput::checked(value / n, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_diff::{central_difference, relative_error, FD_STEP};
    use crate::linalg::{svd_sigma_backward, svd_thin};
    use crate::testutil::*;

    #[test]
    fn equal_singular_values_give_log_two() {
        let z = Matrix::from_columns(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        for tau in [0.05, 0.3, 2.0] {
            let out = pmrl_singular_loss(&[z.clone(), z.clone()], tau).unwrap();
            assert!((out.value - 2f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn aligned_instance_has_vanishing_loss() {
        let c = vec![0.0, 0.6, 0.8, 0.0];
        let z = Matrix::from_columns(&[c.clone(), c.clone(), c]).unwrap();
        let out = pmrl_singular_loss(&[z], 0.05).unwrap();
        // scalar oracle: log(1 + 2 e^{-√3/0.05})
        let oracle = (1.0 + 2.0 * (-(3f64.sqrt()) / 0.05).exp()).ln();
        assert!(out.value <= 1e-12);
        assert!((out.value - oracle).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng(11);
        let (d, k) = (8, 4);
        for _ in 0..20 {
            let z = random_unit(&mut r, d, k);
            let tau = 0.5;
            let out = pmrl_singular_loss(std::slice::from_ref(&z), tau).unwrap();
            let fd = central_difference(z.data(), FD_STEP, |x| {
                let m = Matrix::new(d, k, x.to_vec()).unwrap();
                singular_loss_from_svds(&[svd_thin(&m).unwrap()], tau)
                    .unwrap()
                    .value
            });
            assert!(relative_error(out.grad_z[0].data(), &fd) < 1e-4);
        }
    }

    #[test]
    fn gradient_is_sigma_chain_rule() {
        let mut r = rng(12);
        let batch = random_batch(&mut r, 3, 6, 3);
        let tau = 0.05;
        let out = pmrl_singular_loss(&batch, tau).unwrap();
        for (z, g) in batch.iter().zip(&out.grad_z) {
            let svd = svd_thin(z).unwrap();
            let logits: Vec<f64> = svd.sigma.iter().map(|s| s / tau).collect();
            let p = crate::scalar::softmax(&logits);
            let gs: Vec<f64> = (0..3)
                .map(|j| (p[j] - if j == 0 { 1.0 } else { 0.0 }) / (tau * 3.0))
                .collect();
            let chain = svd_sigma_backward(&svd, &gs).unwrap();
            assert!(g.sub(&chain).max_abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_empty_and_non_unit() {
        assert!(matches!(
            pmrl_singular_loss::<f64>(&[], 0.05),
            Err(Error::EmptyBatch)
        ));
        let z = Matrix::from_columns(&[vec![1.0, 0.0], vec![0.0, 1.1]]).unwrap();
        assert!(matches!(
            pmrl_singular_loss(&[z], 0.05),
            Err(Error::NonUnitColumns { column: 1, .. })
        ));
    }
}
