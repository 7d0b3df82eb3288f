use super::{batch_shape, LossOutput};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{dot, log_sum_exp, Real};

/// Value and gradients of a two-view contrastive loss.
#[derive(Clone, Debug, PartialEq)]
pub struct PairLossOutput<T> {
    pub value: T,
    pub grad_m1: Vec<Vec<T>>,
    pub grad_m2: Vec<Vec<T>>,
}

/// Pairwise InfoNCE from the first view to the second:
/// `L = −(1/N) Σ_i log( exp(a_i·b_i/τ) / Σ_j exp(a_i·b_j/τ) )`.
pub fn pairwise_infonce<T: Real>(
    z_m1: &[Vec<T>],
    z_m2: &[Vec<T>],
    tau: T,
) -> Result<PairLossOutput<T>> {
    if z_m1.len() != z_m2.len() {
        return Err(Error::LengthMismatch(z_m1.len(), z_m2.len()));
    }
    let n = z_m1.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let dim = z_m1[0].len();
    if z_m1.iter().chain(z_m2).any(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch("vectors differ in length".into()));
    }

    let nf = T::from_usize_lossy(n);
    let scale = T::one() / (nf * tau);
    let mut value = T::zero();
    let mut grad_m1 = vec![vec![T::zero(); dim]; n];
    let mut grad_m2 = vec![vec![T::zero(); dim]; n];
    for i in 0..n {
        let logits: Vec<T> = z_m2.iter().map(|b| dot(&z_m1[i], b) / tau).collect();
        let lse = log_sum_exp(&logits);
        value = value + (lse - logits[i]);
        for j in 0..n {
            let w = ((logits[j] - lse).exp() - if i == j { T::one() } else { T::zero() }) * scale;
            for r in 0..dim {
                grad_m1[i][r] = grad_m1[i][r] + w * z_m2[j][r];
                grad_m2[j][r] = grad_m2[j][r] + w * z_m1[i][r];
            }
        }
    }
    let value = value / nf;
    if !value.is_finite() {
        return Err(Error::NonFinite("infonce value".into()));
    }
    Ok(PairLossOutput {
        value,
        grad_m1,
        grad_m2,
    })
}

/// Pairwise InfoNCE averaged over every ordered pair of distinct modalities.
pub fn multimodal_infonce<T: Real>(z_batch: &[Matrix<T>], tau: T) -> Result<LossOutput<T>> {
    let (d, k) = batch_shape(z_batch)?;
    let views: Vec<Vec<Vec<T>>> = (0..k)
        .map(|m| z_batch.iter().map(|z| z.column(m)).collect())
        .collect();
    let pairs = T::from_usize_lossy(k * (k - 1));
    let mut value = T::zero();
    let mut grads = vec![Matrix::zeros(d, k); z_batch.len()];
    for a in 0..k {
        for b in (0..k).filter(|&b| b != a) {
            let out = pairwise_infonce(&views[a], &views[b], tau)?;
            value = value + out.value / pairs;
            for (i, g) in grads.iter_mut().enumerate() {
                for r in 0..d {
                    g[(r, a)] = g[(r, a)] + out.grad_m1[i][r] / pairs;
                    g[(r, b)] = g[(r, b)] + out.grad_m2[i][r] / pairs;
                }
            }
        }
    }
    LossOutput::checked(value, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_diff::{central_difference, relative_error, FD_STEP};
    use crate::testutil::*;

    #[test]
    fn orthogonal_pairs_scalar_oracle() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let out = pairwise_infonce(&a, &a, 1.0).unwrap();
        let oracle = (1f64.exp() + 1.0).ln() - 1.0;
        assert!((out.value - oracle).abs() < 1e-15);
        assert!((out.value - 0.3132617).abs() < 1e-7);
    }

    #[test]
    fn indistinguishable_batch_gives_log_n() {
        let v = vec![vec![0.6, 0.8]; 5];
        let out = pairwise_infonce(&v, &v, 0.07).unwrap();
        assert!((out.value - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng(5);
        let (n, d) = (5, 6);
        let a = random_unit(&mut r, d, n).columns();
        let b = random_unit(&mut r, d, n).columns();
        let tau = 0.2;
        let out = pairwise_infonce(&a, &b, tau).unwrap();
        let x: Vec<f64> = a.iter().chain(&b).flatten().copied().collect();
        let fd = central_difference(&x, FD_STEP, |x| {
            let va: Vec<Vec<f64>> = x[..n * d].chunks(d).map(<[f64]>::to_vec).collect();
            let vb: Vec<Vec<f64>> = x[n * d..].chunks(d).map(<[f64]>::to_vec).collect();
            pairwise_infonce(&va, &vb, tau).unwrap().value
        });
        let analytic: Vec<f64> = out
            .grad_m1
            .iter()
            .chain(&out.grad_m2)
            .flatten()
            .copied()
            .collect();
        assert!(relative_error(&analytic, &fd) < 1e-5);
    }

    #[test]
    fn multimodal_gradient_matches_finite_differences() {
        let mut r = rng(6);
        let (n, d, k) = (4, 5, 3);
        let batch = random_batch(&mut r, n, d, k);
        let out = multimodal_infonce(&batch, 0.3).unwrap();
        let fd = central_difference(&flatten(&batch), FD_STEP, |x| {
            multimodal_infonce(&unflatten(x, n, d, k), 0.3)
                .unwrap()
                .value
        });
        assert!(relative_error(&flatten(&out.grad_z), &fd) < 1e-5);
    }

    #[test]
    fn length_mismatch() {
        let a = vec![vec![1.0, 0.0]];
        let b = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(matches!(
            pairwise_infonce(&a, &b, 1.0),
            Err(Error::LengthMismatch(1, 2))
        ));
        assert!(matches!(
            pairwise_infonce::<f64>(&[], &[], 1.0),
            Err(Error::EmptyBatch)
        ));
    }
}
