mod common;

use common::{aligned, near_aligned, orthonormal_matrix, random_unit_matrix};
use pmrl::linalg::{effective_rank, gram, svd_thin, Matrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const RANK_THRESHOLD: f64 = 1e-6;

fn all_ones(z: &Matrix<f64>, tol: f64) -> bool {
    gram(z)
        .unwrap()
        .matrix()
        .data()
        .iter()
        .all(|g| (g - 1.0).abs() <= tol)
}

fn shape() -> impl Strategy<Value = (usize, usize)> {
    (2usize..=8).prop_flat_map(|k| (k.max(4)..=64usize, Just(k)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn energy_and_bound_hold((d, k) in shape(), seed in any::<u64>()) {
        let z = random_unit_matrix(&mut ChaCha8Rng::seed_from_u64(seed), d, k);
        let svd = svd_thin(&z).unwrap();
        let energy: f64 = svd.sigma.iter().map(|s| s * s).sum();
        prop_assert!((energy - k as f64).abs() <= 1e-9);
        prop_assert!(svd.sigma[0] <= (k as f64).sqrt() + 1e-9);
        prop_assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
        let err = svd.reconstruct().sub(&z).max_abs();
        prop_assert!(err <= 1e-10, "reconstruction error {err}");
    }

    #[test]
    fn factors_are_orthonormal((d, k) in shape(), seed in any::<u64>()) {
        let z = random_unit_matrix(&mut ChaCha8Rng::seed_from_u64(seed), d, k);
        let svd = svd_thin(&z).unwrap();
        for m in [&svd.u, &svd.v] {
            let g = m.t_matmul(m).unwrap();
            prop_assert!(g.sub(&Matrix::identity(k)).max_abs() <= 1e-10);
        }
    }

    #[test]
    fn aligned_columns_reach_the_bound((d, k) in shape(), seed in any::<u64>()) {
        let z = aligned(&mut ChaCha8Rng::seed_from_u64(seed), d, k);
        let svd = svd_thin(&z).unwrap();
        prop_assert!((svd.sigma[0] - (k as f64).sqrt()).abs() <= 1e-9);
        prop_assert_eq!(effective_rank(&svd.sigma, RANK_THRESHOLD), 1);
        prop_assert!(all_ones(&z, 1e-12));
    }

    #[test]
    fn near_aligned_is_not_rank_one(
        k in 2usize..=8,
        extra in 0usize..8,
        log_eps in -4.0f64..-0.5,
        seed in any::<u64>(),
    ) {
        let eps = 10f64.powf(log_eps);
        let z = near_aligned(&mut ChaCha8Rng::seed_from_u64(seed), k + 1 + extra, k, eps);
        let svd = svd_thin(&z).unwrap();
        prop_assert!(effective_rank(&svd.sigma, RANK_THRESHOLD) > 1);
        prop_assert!(!all_ones(&z, 1e-9));
        // spectrum of (1-ε)·11ᵀ + ε·I
        let top = (k as f64 * (1.0 - eps) + eps).sqrt();
        prop_assert!((svd.sigma[0] - top).abs() <= 1e-9);
        for s in &svd.sigma[1..] {
            prop_assert!((s - eps.sqrt()).abs() <= 1e-9);
        }
    }

    #[test]
    fn orthonormal_columns_have_flat_spectrum((d, k) in shape(), seed in any::<u64>()) {
        let z = orthonormal_matrix(&mut ChaCha8Rng::seed_from_u64(seed), d, k);
        let svd = svd_thin(&z).unwrap();
        prop_assert!(svd.sigma.iter().all(|s| (s - 1.0).abs() <= 1e-10));
        prop_assert_eq!(effective_rank(&svd.sigma, RANK_THRESHOLD), k);
    }

    #[test]
    fn spectrum_ignores_column_order((d, k) in shape(), seed in any::<u64>(), shift in 1usize..8) {
        let z = random_unit_matrix(&mut ChaCha8Rng::seed_from_u64(seed), d, k);
        let mut cols = z.columns();
        cols.rotate_left(shift % k);
        let p = Matrix::from_columns(&cols).unwrap();
        let (a, b) = (svd_thin(&z).unwrap(), svd_thin(&p).unwrap());
        for (x, y) in a.sigma.iter().zip(&b.sigma) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }
}

/// Rank one does not force an all-ones Gram matrix: columns may point in
/// opposite directions. Only `Z` with `ZᵀZ = s sᵀ`, `s ∈ {±1}^k`, are rank one.
#[test]
fn antiparallel_columns_are_rank_one_without_alignment() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = common::orthonormal(&mut rng, 6, 1).remove(0);
    let neg: Vec<f64> = u.iter().map(|x| -x).collect();
    let z = Matrix::from_columns(&[u.clone(), u, neg.clone(), neg]).unwrap();
    let svd = svd_thin(&z).unwrap();
    assert!((svd.sigma[0] - 2.0).abs() <= 1e-12);
    assert_eq!(effective_rank(&svd.sigma, RANK_THRESHOLD), 1);
    assert!(!all_ones(&z, 1e-9));
    let g = gram(&z).unwrap();
    assert!((g.mean_off_diagonal() + 1.0 / 3.0).abs() <= 1e-12);
}
