#![allow(dead_code)]

use auxlearn::data::{CoefficientMatrix, MultiTaskDataset, NoiseCovariance, TaskKind};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn normal_matrix<R: Rng>(rng: &mut R, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn random_psd(rng: &mut ChaCha8Rng, k: usize) -> NoiseCovariance<f64> {
    let a = normal_matrix(rng, k, k);
    let s = &a * a.transpose() + DMatrix::identity(k, k) * 0.05;
    NoiseCovariance::new((&s + s.transpose()) * 0.5).unwrap()
}

pub fn random_rank_d(
    rng: &mut ChaCha8Rng,
    p: usize,
    tasks: usize,
    d: usize,
) -> CoefficientMatrix<f64> {
    CoefficientMatrix::with_rank(normal_matrix(rng, p, d) * normal_matrix(rng, d, tasks), d)
        .unwrap()
}

/// `Y = XB + noise_sd · E` with standard normal `X` and `E`.
pub fn linear_data(
    rng: &mut ChaCha8Rng,
    n: usize,
    b: &DMatrix<f64>,
    noise_sd: f64,
) -> MultiTaskDataset<f64> {
    let x = normal_matrix(rng, n, b.nrows());
    let e = normal_matrix(rng, n, b.ncols());
    let y = &x * b + e * noise_sd;
    MultiTaskDataset::new(x, y, vec![TaskKind::Continuous; b.ncols()]).unwrap()
}
