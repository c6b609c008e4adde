//! Latent initialization: random draws and magnitude-informed selection.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generator::{sample_latent, GeneratorNet};
use crate::math::Seed;
use crate::measurement::{Magnitudes, MeasurementOperator};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MiiSettings {
    pub candidates: usize,
    pub seed: Seed,
}

impl Default for MiiSettings {
    fn default() -> Self {
        Self { candidates: 5000, seed: Seed(0) }
    }
}

/// `||A G(z)| - y||^2` for each latent, in input order.
pub fn magnitude_scores(
    op: &MeasurementOperator,
    y: &Magnitudes,
    net: &GeneratorNet,
    latents: &[Vec<f64>],
) -> Result<Vec<f64>> {
    latents
        .par_iter()
        .map(|z| op.magnitude_loss(&net.forward(z)?.0, y))
        .collect()
}

/// Samples `settings.candidates` latents and returns the one whose image
/// best matches the measured magnitudes (lowest index on ties).
pub fn mii_init(op: &MeasurementOperator, y: &Magnitudes, net: &GeneratorNet, settings: &MiiSettings) -> Result<Vec<f64>> {
    if settings.candidates == 0 {
        return Err(Error::Config("MII needs at least one candidate".into()));
    }
    let mut latents = sample_latent(net.latent_dim(), settings.candidates, settings.seed)?;
    if latents.len() == 1 {
        return Ok(latents.remove(0));
    }
    let scores = magnitude_scores(op, y, net, &latents)?;
    let best = argmin(&scores);
    Ok(latents.swap_remove(best))
}

/// Index of the smallest value; the first one wins ties.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitScheme {
    Random,
    Mii { candidates: usize },
}

/// Initial latent for one restart. `perturbation` adds N(0, sd^2) noise to
/// the chosen latent.
pub fn initial_latent(
    scheme: InitScheme,
    op: &MeasurementOperator,
    y: &Magnitudes,
    net: &GeneratorNet,
    seed: Seed,
    perturbation: Option<f64>,
) -> Result<Vec<f64>> {
    let mut z = match scheme {
        InitScheme::Random => sample_latent(net.latent_dim(), 1, seed)?.remove(0),
        InitScheme::Mii { candidates } => mii_init(op, y, net, &MiiSettings { candidates, seed })?,
    };
    if let Some(sd) = perturbation {
        let noise = sample_latent(net.latent_dim(), 1, seed.derive(u64::MAX))?.remove(0);
        for (zi, e) in z.iter_mut().zip(noise) {
            *zi += sd * e;
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{Activation, DenseLayer};
    use crate::math::{standard_normal, Shape2D};

    fn net() -> GeneratorNet {
        let l1 = DenseLayer::new(8, 3, standard_normal(24, Seed(1)), standard_normal(8, Seed(2)), Activation::Relu).unwrap();
        let l2 = DenseLayer::new(16, 8, standard_normal(128, Seed(3)), standard_normal(16, Seed(4)), Activation::Sigmoid)
            .unwrap();
        GeneratorNet::new(vec![l1, l2]).unwrap()
    }

    fn problem() -> (MeasurementOperator, Magnitudes, GeneratorNet) {
        let net = net();
        let op = MeasurementOperator::fourier(Shape2D::new(4, 4).unwrap());
        let target = net.forward(&[0.3, -1.0, 0.8]).unwrap().0;
        let y = op.apply_magnitude(&target).unwrap();
        (op, y, net)
    }

    #[test]
    fn single_candidate_is_returned() {
        let (op, y, net) = problem();
        let z = mii_init(&op, &y, &net, &MiiSettings { candidates: 1, seed: Seed(9) }).unwrap();
        assert_eq!(z, sample_latent(3, 1, Seed(9)).unwrap()[0]);
    }

    #[test]
    fn chosen_candidate_minimizes_loss() {
        let (op, y, net) = problem();
        let settings = MiiSettings { candidates: 64, seed: Seed(4) };
        let z = mii_init(&op, &y, &net, &settings).unwrap();
        let chosen = op.magnitude_loss(&net.forward(&z).unwrap().0, &y).unwrap();
        for cand in sample_latent(3, 64, Seed(4)).unwrap() {
            assert!(chosen <= op.magnitude_loss(&net.forward(&cand).unwrap().0, &y).unwrap());
        }
    }

    #[test]
    fn more_candidates_never_hurt() {
        let (op, y, net) = problem();
        let mut previous = f64::INFINITY;
        for p in [1, 2, 5, 20, 100] {
            let z = mii_init(&op, &y, &net, &MiiSettings { candidates: p, seed: Seed(12) }).unwrap();
            let loss = op.magnitude_loss(&net.forward(&z).unwrap().0, &y).unwrap();
            assert!(loss <= previous);
            previous = loss;
        }
    }

    #[test]
    fn argmin_prefers_first() {
        assert_eq!(argmin(&[3.0, 1.0, 1.0, 2.0]), 1);
    }
}
