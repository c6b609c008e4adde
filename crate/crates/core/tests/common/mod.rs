#![allow(dead_code)]

use prilo::math::standard_normal;
use prilo::{Activation, DenseLayer, GeneratorNet, Seed};
use rand::Rng;

/// Fully-connected net with `dims[0]` inputs; weights scaled by
/// `1/sqrt(fan_in)`.
pub fn random_net(dims: &[usize], activations: &[Activation], seed: Seed) -> GeneratorNet {
    let layers = dims
        .windows(2)
        .zip(activations)
        .enumerate()
        .map(|(i, (w, &act))| {
            let (cols, rows) = (w[0], w[1]);
            let scale = 1.0 / (cols as f64).sqrt();
            let weight = standard_normal(rows * cols, seed.derive(2 * i as u64)).iter().map(|v| v * scale).collect();
            let bias = standard_normal(rows, seed.derive(2 * i as u64 + 1)).iter().map(|v| 0.1 * v).collect();
            DenseLayer::new(rows, cols, weight, bias, act).unwrap()
        })
        .collect();
    GeneratorNet::new(layers).unwrap()
}

pub fn uniform(len: usize, lo: f64, hi: f64, seed: Seed) -> Vec<f64> {
    let mut rng = seed.rng();
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
