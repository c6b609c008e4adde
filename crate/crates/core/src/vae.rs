//! Minimal dense VAE trained with a Bernoulli likelihood and Adam. The
//! decoder becomes the generator used for reconstruction.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::generator::{Activation, DenseLayer, GeneratorNet};
use crate::math::Seed;

#[derive(Clone, Debug, PartialEq)]
pub struct VaeSpec {
    pub latent_dim: usize,
    /// Encoder hidden widths, input side first; the decoder mirrors them.
    pub hidden_dims: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: Seed,
}

impl VaeSpec {
    /// Latent 32, one hidden layer of 256 units, 20 epochs.
    pub fn desk_scale() -> Self {
        Self {
            latent_dim: 32,
            hidden_dims: vec![256],
            epochs: 20,
            learning_rate: 1e-3,
            batch_size: 128,
            seed: Seed(0),
        }
    }

    /// Three hidden layers of 500 units, latent 100, 100 epochs.
    pub fn full_scale() -> Self {
        Self {
            latent_dim: 100,
            hidden_dims: vec![500, 500, 500],
            epochs: 100,
            ..Self::desk_scale()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.latent_dim == 0
            || self.hidden_dims.iter().any(|&h| h == 0)
            || self.epochs == 0
            || self.batch_size == 0
            || !(self.learning_rate > 0.0)
        {
            return Err(Error::Config(format!("invalid VAE spec {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainedVae {
    /// `z -> x`, sigmoid output.
    pub decoder: GeneratorNet,
    /// `x -> mu(x)`, the posterior mean.
    pub encoder_mean: GeneratorNet,
    /// Mean negative ELBO per image for each epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainedVae {
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mu = self.encoder_mean.forward(x)?.0;
        Ok(self.decoder.forward(&mu)?.0)
    }
}

struct Dense {
    w: Array2<f64>, // in x out
    b: Array1<f64>,
    relu: bool,
    adam: [AdamState; 2],
}

struct DenseCache {
    input: Array2<f64>,
    pre: Array2<f64>,
}

#[derive(Clone)]
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len] }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, t: i32) {
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
    }
}

impl Dense {
    fn new(input: usize, output: usize, relu: bool, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let dist = Uniform::new(-bound, bound).expect("positive bound");
        Self {
            w: Array2::from_shape_fn((input, output), |_| dist.sample(rng)),
            b: Array1::from_shape_fn(output, |_| dist.sample(rng)),
            relu,
            adam: [AdamState::new(input * output), AdamState::new(output)],
        }
    }

    fn forward(&self, input: Array2<f64>) -> (Array2<f64>, DenseCache) {
        let pre = input.dot(&self.w) + &self.b;
        let out = if self.relu { pre.mapv(|v| v.max(0.0)) } else { pre.clone() };
        (out, DenseCache { input, pre })
    }

    /// Returns the gradient w.r.t. the input and updates the parameters.
    fn backward(&mut self, cache: &DenseCache, mut grad_out: Array2<f64>, lr: f64, t: i32) -> Array2<f64> {
        if self.relu {
            grad_out.zip_mut_with(&cache.pre, |g, &p| {
                if p <= 0.0 {
                    *g = 0.0
                }
            });
        }
        let grad_in = grad_out.dot(&self.w.t());
        let gw = cache.input.t().dot(&grad_out);
        let gb = grad_out.sum_axis(Axis(0));
        adam_step(
            self.w.as_slice_mut().expect("standard layout"),
            gw.as_standard_layout().as_slice().expect("standard layout"),
            &mut self.adam[0],
            lr,
            t,
        );
        adam_step(self.b.as_slice_mut().expect("contiguous"), gb.as_slice().expect("contiguous"), &mut self.adam[1], lr, t);
        grad_in
    }

    fn to_layer(&self, activation: Activation) -> Result<DenseLayer> {
        let (input, output) = self.w.dim();
        let weight = self.w.t().iter().copied().collect();
        DenseLayer::new(output, input, weight, self.b.to_vec(), activation)
    }
}

fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

/// Trains a VAE on `images` (pixels in `[0, 1]`) and returns its decoder and
/// encoder mean network.
pub fn train_vae(images: &[Vec<f64>], spec: &VaeSpec) -> Result<TrainedVae> {
    spec.validate()?;
    let n = images.first().map(Vec::len).ok_or_else(|| Error::Data("empty training set".into()))?;
    if n == 0 || images.iter().any(|img| img.len() != n) {
        return Err(Error::Data("training images must share one nonzero length".into()));
    }
    let mut rng = spec.seed.rng();

    let mut encoder = Vec::new();
    let mut width = n;
    for &h in &spec.hidden_dims {
        encoder.push(Dense::new(width, h, true, &mut rng));
        width = h;
    }
    let mut mean_head = Dense::new(width, spec.latent_dim, false, &mut rng);
    let mut logvar_head = Dense::new(width, spec.latent_dim, false, &mut rng);
    let mut decoder = Vec::new();
    width = spec.latent_dim;
    for &h in spec.hidden_dims.iter().rev() {
        decoder.push(Dense::new(width, h, true, &mut rng));
        width = h;
    }
    decoder.push(Dense::new(width, n, false, &mut rng));

    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut epoch_losses = Vec::with_capacity(spec.epochs);
    let mut step = 0i32;
    let lr = spec.learning_rate;
    for epoch in 0..spec.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(spec.batch_size) {
            step += 1;
            let bsz = batch.len();
            let x = Array2::from_shape_fn((bsz, n), |(r, c)| images[batch[r]][c]);

            let mut enc_caches = Vec::with_capacity(encoder.len());
            let mut h = x.clone();
            for layer in &encoder {
                let (out, cache) = layer.forward(h);
                enc_caches.push(cache);
                h = out;
            }
            let (mu, mu_cache) = mean_head.forward(h.clone());
            let (logvar, lv_cache) = logvar_head.forward(h);
            let noise = Array2::from_shape_fn((bsz, spec.latent_dim), |_| rng.sample::<f64, _>(StandardNormal));
            let std = logvar.mapv(|v| (0.5 * v).exp());
            let z = &mu + &(&std * &noise);

            let mut dec_caches = Vec::with_capacity(decoder.len());
            let mut d = z;
            for layer in &decoder {
                let (out, cache) = layer.forward(d);
                dec_caches.push(cache);
                d = out;
            }
            let logits = d;

            let recon: f64 = logits.iter().zip(x.iter()).map(|(&l, &t)| softplus(l) - t * l).sum();
            let kl: f64 = mu
                .iter()
                .zip(logvar.iter())
                .map(|(&m, &lv)| -0.5 * (1.0 + lv - m * m - lv.exp()))
                .sum();
            let loss = recon + kl;
            if !loss.is_finite() {
                return Err(Error::Divergence { iteration: epoch, context: "VAE loss is not finite".into() });
            }
            total += loss;

            let scale = 1.0 / bsz as f64;
            let mut grad = Array2::from_shape_fn((bsz, n), |(r, c)| {
                (crate::generator::sigmoid(logits[[r, c]]) - x[[r, c]]) * scale
            });
            for (layer, cache) in decoder.iter_mut().zip(&dec_caches).rev() {
                grad = layer.backward(cache, grad, lr, step);
            }
            let grad_z = grad;
            let grad_mu = &grad_z + &(&mu * scale);
            let grad_logvar = Array2::from_shape_fn((bsz, spec.latent_dim), |(r, c)| {
                grad_z[[r, c]] * noise[[r, c]] * 0.5 * std[[r, c]] + 0.5 * (logvar[[r, c]].exp() - 1.0) * scale
            });
            let grad_h = mean_head.backward(&mu_cache, grad_mu, lr, step)
                + logvar_head.backward(&lv_cache, grad_logvar, lr, step);
            let mut grad = grad_h;
            for (layer, cache) in encoder.iter_mut().zip(&enc_caches).rev() {
                grad = layer.backward(cache, grad, lr, step);
            }
        }
        epoch_losses.push(total / images.len() as f64);
    }

    let mut dec_layers = Vec::with_capacity(decoder.len());
    for (i, layer) in decoder.iter().enumerate() {
        let act = if i + 1 == decoder.len() { Activation::Sigmoid } else { Activation::Relu };
        dec_layers.push(layer.to_layer(act)?);
    }
    let mut enc_layers = Vec::with_capacity(encoder.len() + 1);
    for layer in &encoder {
        enc_layers.push(layer.to_layer(Activation::Relu)?);
    }
    enc_layers.push(mean_head.to_layer(Activation::Identity)?);
    Ok(TrainedVae {
        decoder: GeneratorNet::new(dec_layers)?,
        encoder_mean: GeneratorNet::new(enc_layers)?,
        epoch_losses,
    })
}

/// Mean per-pixel squared error of encode-decode reconstructions.
pub fn reconstruction_mse(vae: &TrainedVae, images: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for img in images {
        let rec = vae.reconstruct(img)?;
        total += rec.iter().zip(img).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        count += img.len();
    }
    Ok(total / count.max(1) as f64)
}


#[cfg(test)]
mod tests {
    use super::*;

    fn toy_images(count: usize) -> Vec<Vec<f64>> {
        // Horizontal and vertical bars on a 6x6 grid.
        (0..count)
            .map(|i| {
                let pos = i % 6;
                let vertical = (i / 6) % 2 == 1;
                (0..36)
                    .map(|p| {
                        let (r, c) = (p / 6, p % 6);
                        if (vertical && c == pos) || (!vertical && r == pos) {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    }

    fn tiny_spec() -> VaeSpec {
        VaeSpec {
            latent_dim: 4,
            hidden_dims: vec![16],
            epochs: 60,
            learning_rate: 1e-2,
            batch_size: 8,
            seed: Seed(5),
        }
    }

    #[test]
    fn learns_toy_bars() {
        let data = toy_images(48);
        let vae = train_vae(&data, &tiny_spec()).unwrap();
        let first = vae.epoch_losses[0];
        let last = *vae.epoch_losses.last().unwrap();
        assert!(last < 0.7 * first, "{first} -> {last}");
        assert_eq!(vae.decoder.latent_dim(), 4);
        assert_eq!(vae.decoder.output_dim(), 36);
        let img = vae.decoder.forward(&[0.0; 4]).unwrap().0;
        assert!(img.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let data = toy_images(24);
        let spec = VaeSpec { epochs: 3, ..tiny_spec() };
        let a = train_vae(&data, &spec).unwrap();
        let b = train_vae(&data, &spec).unwrap();
        assert_eq!(a.decoder, b.decoder);
        assert_eq!(a.decoder.to_bytes(), b.decoder.to_bytes());
    }

    #[test]
    fn rejects_empty_or_ragged_data() {
        assert!(matches!(train_vae(&[], &tiny_spec()), Err(Error::Data(_))));
        let ragged = vec![vec![0.0; 4], vec![0.0; 5]];
        assert!(matches!(train_vae(&ragged, &tiny_spec()), Err(Error::Data(_))));
    }

    #[test]
    fn diverges_loudly() {
        let data = toy_images(12);
        let spec = VaeSpec { learning_rate: 1e300, epochs: 5, ..tiny_spec() };
        assert!(matches!(train_vae(&data, &spec), Err(Error::Divergence { .. })));
    }
}
