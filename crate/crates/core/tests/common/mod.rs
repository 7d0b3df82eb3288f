#![allow(dead_code)]

use pmrl::linalg::{normalize_columns, Matrix};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn random_unit_matrix<R: Rng>(rng: &mut R, d: usize, k: usize) -> Matrix<f64> {
    let z = Matrix::new(d, k, gaussian(rng, d * k)).unwrap();
    normalize_columns(&z).unwrap()
}

/// `count` orthonormal vectors in `R^d` by Gram-Schmidt on Gaussian draws.
pub fn orthonormal<R: Rng>(rng: &mut R, d: usize, count: usize) -> Vec<Vec<f64>> {
    assert!(count <= d);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = gaussian(rng, d);
        for _ in 0..2 {
            for b in &basis {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// Every column equal to one random unit vector.
pub fn aligned<R: Rng>(rng: &mut R, d: usize, k: usize) -> Matrix<f64> {
    let u = orthonormal(rng, d, 1).remove(0);
    Matrix::from_columns(&vec![u; k]).unwrap()
}

/// Unit columns `√(1−ε)·q₀ + √ε·q_m` whose pairwise cosines are all `1 − ε`.
pub fn near_aligned<R: Rng>(rng: &mut R, d: usize, k: usize, eps: f64) -> Matrix<f64> {
    let q = orthonormal(rng, d, k + 1);
    let (a, b) = ((1.0 - eps).sqrt(), eps.sqrt());
    let cols: Vec<Vec<f64>> = (1..=k)
        .map(|m| q[0].iter().zip(&q[m]).map(|(x, y)| a * x + b * y).collect())
        .collect();
    Matrix::from_columns(&cols).unwrap()
}

pub fn orthonormal_matrix<R: Rng>(rng: &mut R, d: usize, k: usize) -> Matrix<f64> {
    Matrix::from_columns(&orthonormal(rng, d, k)).unwrap()
}
