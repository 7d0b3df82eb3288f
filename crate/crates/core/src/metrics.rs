//! Alignment diagnostics, retrieval, modality contributions and
//! classification scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{effective_rank, gram, svd_thin, Matrix, SvdResult};
use crate::scalar::{dot, norm, Real};

/// Relative threshold used for the reported effective rank.
pub const REPORT_RANK_THRESHOLD: f64 = 0.01;
/// `σ₁/√k` at or above this counts an instance as aligned.
pub const ALIGNED_RATIO: f64 = 0.95;
/// Smallest singular value below this counts as collapsed.
pub const COLLAPSED_SIGMA: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub n_instances: usize,
    pub k: usize,
    /// Pairwise modality cosine, averaged over pairs and instances.
    pub mean_pairwise_cosine: f64,
    /// Smallest pairwise modality cosine over all pairs and instances.
    pub min_pairwise_cosine: f64,
    /// Mean of `σ_j` at each position `j`.
    pub mean_sigma: Vec<f64>,
    /// Mean of `σ₁/√k`; 1 exactly at full alignment.
    pub mean_sigma1_ratio: f64,
    pub mean_effective_rank: f64,
    /// Mean `u₁⁽ⁱ⁾ᵀu₁⁽ʲ⁾` over ordered pairs `i ≠ j`.
    pub mean_u1_offdiag_similarity: f64,
    /// Mean smallest singular value.
    pub mean_min_sigma: f64,
    /// Fraction of instances with `σ₁/√k ≥ 0.95`.
    pub frac_aligned: f64,
    /// Fraction with `σ_min < 0.05` while `σ₁/√k < 0.95`.
    pub frac_collapsed: f64,
}

pub fn alignment_report<T: Real>(z_batch: &[Matrix<T>]) -> Result<AlignmentReport> {
    let svds = z_batch.iter().map(svd_thin).collect::<Result<Vec<_>>>()?;
    alignment_report_from_svds(z_batch, &svds)
}

pub fn alignment_report_from_svds<T: Real>(
    z_batch: &[Matrix<T>],
    svds: &[SvdResult<T>],
) -> Result<AlignmentReport> {
    let n = z_batch.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let k = z_batch[0].cols();
    let sqrt_k = (k as f64).sqrt();

    let mut cos_sum = 0.0;
    let mut cos_min = f64::INFINITY;
    let mut sigma_sum = vec![0.0; k];
    let mut ratio_sum = 0.0;
    let mut rank_sum = 0.0;
    let mut min_sigma_sum = 0.0;
    let mut aligned = 0usize;
    let mut collapsed = 0usize;
    for (z, svd) in z_batch.iter().zip(svds) {
        let g = gram(z)?;
        cos_sum += g.mean_off_diagonal().as_f64();
        cos_min = cos_min.min(g.min_off_diagonal().as_f64());
        for (acc, s) in sigma_sum.iter_mut().zip(&svd.sigma) {
            *acc += s.as_f64();
        }
        let ratio = svd.sigma[0].as_f64() / sqrt_k;
        let smin = svd.sigma[k - 1].as_f64();
        ratio_sum += ratio;
        rank_sum += effective_rank(&svd.sigma, T::lit(REPORT_RANK_THRESHOLD)) as f64;
        min_sigma_sum += smin;
        if ratio >= ALIGNED_RATIO {
            aligned += 1;
        } else if smin < COLLAPSED_SIGMA {
            collapsed += 1;
        }
    }

    let dirs: Vec<Vec<T>> = svds.iter().map(SvdResult::leading_direction).collect();
    let mut u_sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                u_sum += dot(&dirs[i], &dirs[j]).as_f64();
            }
        }
    }
    let pairs = (n * (n - 1)) as f64;
    let nf = n as f64;
    Ok(AlignmentReport {
        n_instances: n,
        k,
        mean_pairwise_cosine: cos_sum / nf,
        min_pairwise_cosine: cos_min,
        mean_sigma: sigma_sum.into_iter().map(|s| s / nf).collect(),
        mean_sigma1_ratio: ratio_sum / nf,
        mean_effective_rank: rank_sum / nf,
        mean_u1_offdiag_similarity: if n > 1 { u_sum / pairs } else { 0.0 },
        mean_min_sigma: min_sigma_sum / nf,
        frac_aligned: aligned as f64 / nf,
        frac_collapsed: collapsed as f64 / nf,
    })
}

/// Fraction of queries whose ground-truth gallery item ranks within the top
/// `K` by cosine similarity, for each requested `K`. Ties go to the lower
/// gallery index.
pub fn recall_at_k<T: Real>(
    query_reps: &[Vec<T>],
    gallery_reps: &[Vec<T>],
    ground_truth: &[usize],
    k_values: &[usize],
) -> Result<BTreeMap<usize, f64>> {
    if query_reps.len() != gallery_reps.len() {
        return Err(Error::LengthMismatch(query_reps.len(), gallery_reps.len()));
    }
    if ground_truth.len() != query_reps.len() {
        return Err(Error::LengthMismatch(ground_truth.len(), query_reps.len()));
    }
    if query_reps.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let unit = |v: &Vec<T>| -> Vec<T> {
        let n = norm(v);
        if n > T::zero() {
            v.iter().map(|&x| x / n).collect()
        } else {
            v.clone()
        }
    };
    let queries: Vec<Vec<T>> = query_reps.iter().map(unit).collect();
    let gallery: Vec<Vec<T>> = gallery_reps.iter().map(unit).collect();

    let ranks: Vec<usize> = queries
        .iter()
        .zip(ground_truth)
        .map(|(q, &gt)| {
            let target = dot(q, &gallery[gt]);
            gallery
                .iter()
                .enumerate()
                .filter(|&(j, g)| {
                    let s = dot(q, g);
                    s > target || (s == target && j < gt)
                })
                .count()
        })
        .collect();
    let n = ranks.len() as f64;
    Ok(k_values
        .iter()
        .map(|&k| (k, ranks.iter().filter(|&&r| r < k).count() as f64 / n))
        .collect())
}

/// Mean `|V|` over instances: entry `(m, j)` is how strongly modality `m`
/// loads on singular direction `j`.
pub fn modality_contribution<T: Real>(z_batch: &[Matrix<T>]) -> Result<Matrix<T>> {
    let first = z_batch.first().ok_or(Error::EmptyBatch)?;
    let k = first.cols();
    let mut acc = Matrix::zeros(k, k);
    for z in z_batch {
        let svd = svd_thin(z)?;
        acc.add_assign_scaled(&svd.v.map(|x| x.abs()), T::one());
    }
    Ok(acc.scale(T::one() / T::from_usize_lossy(z_batch.len())))
}

/// `(AUC, accuracy)`. Accuracy predicts 1 when `score ≥ 0.5`; AUC is the
/// probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn classification_metrics(scores: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| u8::from(s >= 0.5) == y)
        .count();
    let accuracy = correct as f64 / scores.len() as f64;

    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 1)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y != 1)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass);
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &q in &neg {
            if p > q {
                wins += 1.0;
            } else if p == q {
                wins += 0.5;
            }
        }
    }
    Ok((wins / (pos.len() * neg.len()) as f64, accuracy))
}
