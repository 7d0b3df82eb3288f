use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{normalize_columns, Matrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, d: usize, k: usize) -> Matrix<f64> {
    let data = (0..d * k).map(|_| StandardNormal.sample(rng)).collect();
    Matrix::new(d, k, data).unwrap()
}

pub fn random_unit(rng: &mut ChaCha8Rng, d: usize, k: usize) -> Matrix<f64> {
    normalize_columns(&random_matrix(rng, d, k)).unwrap()
}

pub fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize, k: usize) -> Vec<Matrix<f64>> {
    (0..n).map(|_| random_unit(rng, d, k)).collect()
}

/// Flattens a batch into one parameter vector (instance-major, row-major).
pub fn flatten(batch: &[Matrix<f64>]) -> Vec<f64> {
    batch.iter().flat_map(|z| z.data().to_vec()).collect()
}

pub fn unflatten(x: &[f64], n: usize, d: usize, k: usize) -> Vec<Matrix<f64>> {
    (0..n)
        .map(|i| Matrix::new(d, k, x[i * d * k..(i + 1) * d * k].to_vec()).unwrap())
        .collect()
}
