//! Fully-connected generators `G = G_k o ... o G_1` with subnetwork
//! evaluation and vector-Jacobian products.
//!
//! Layers are addressed 1-based: layer `i` maps `z_{i-1}` to `z_i`, and
//! `z_0` is the latent input.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{standard_normal, Seed};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu { alpha: f64 },
    Sigmoid,
    Tanh,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Self::Identity => 0,
            Self::Relu => 1,
            Self::LeakyRelu { .. } => 2,
            Self::Sigmoid => 3,
            Self::Tanh => 4,
        }
    }

    pub fn apply(self, p: f64) -> f64 {
        match self {
            Self::Identity => p,
            Self::Relu => p.max(0.0),
            Self::LeakyRelu { alpha } => {
                if p > 0.0 {
                    p
                } else {
                    alpha * p
                }
            }
            Self::Sigmoid => sigmoid(p),
            Self::Tanh => p.tanh(),
        }
    }

    /// Derivative given the pre-activation `p` and output `o`. At `p == 0`
    /// the rectifiers use their negative-side slope (0 for relu).
    pub fn derivative(self, p: f64, o: f64) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::Relu => {
                if p > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::LeakyRelu { alpha } => {
                if p > 0.0 {
                    1.0
                } else {
                    alpha
                }
            }
            Self::Sigmoid => o * (1.0 - o),
            Self::Tanh => 1.0 - o * o,
        }
    }
}

pub fn sigmoid(p: f64) -> f64 {
    if p >= 0.0 {
        1.0 / (1.0 + (-p).exp())
    } else {
        let e = p.exp();
        e / (1.0 + e)
    }
}

/// Affine map followed by an activation; `weight` is `rows x cols` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    rows: usize,
    cols: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(rows: usize, cols: usize, weight: Vec<f64>, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Validation(format!("layer dims {rows}x{cols} must be positive")));
        }
        if weight.len() != rows * cols {
            return Err(Error::Validation(format!(
                "weight has {} entries, expected {rows}x{cols}",
                weight.len()
            )));
        }
        if bias.len() != rows {
            return Err(Error::Validation(format!("bias has {} entries, expected {rows}", bias.len())));
        }
        if let Activation::LeakyRelu { alpha } = activation {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::Validation(format!("leaky relu slope {alpha} outside (0, 1)")));
            }
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite parameter".into()));
        }
        Ok(Self { rows, cols, weight, bias, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.cols
    }

    pub fn output_dim(&self) -> usize {
        self.rows
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn pre_activation(&self, input: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.cols)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }

    /// `W^T (cotangent * act'(pre))`.
    fn backward(&self, pre: &[f64], out: &[f64], cotangent: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.cols];
        for ((row, g), (p, o)) in self.weight.chunks_exact(self.cols).zip(cotangent).zip(pre.iter().zip(out)) {
            let delta = g * self.activation.derivative(*p, *o);
            if delta == 0.0 {
                continue;
            }
            for (acc, w) in grad.iter_mut().zip(row) {
                *acc += w * delta;
            }
        }
        grad
    }
}

/// Cached activations of a `forward_sub(first, last, ..)` call.
#[derive(Clone, Debug)]
pub struct ActivationTrace {
    first: usize,
    last: usize,
    /// `z_{first-1}, z_first, ..., z_last`
    values: Vec<Vec<f64>>,
    /// pre-activations of layers `first..=last`
    pre: Vec<Vec<f64>>,
}

impl ActivationTrace {
    pub fn first(&self) -> usize {
        self.first
    }

    pub fn last(&self) -> usize {
        self.last
    }

    pub fn input(&self) -> &[f64] {
        &self.values[0]
    }

    pub fn output(&self) -> &[f64] {
        self.values.last().expect("trace holds the input")
    }

    /// `z_layer` for `first - 1 <= layer <= last`.
    pub fn z(&self, layer: usize) -> Option<&[f64]> {
        if layer + 1 < self.first || layer > self.last {
            return None;
        }
        Some(&self.values[layer + 1 - self.first])
    }

    pub fn pre_activation(&self, layer: usize) -> Option<&[f64]> {
        if layer < self.first || layer > self.last {
            return None;
        }
        Some(&self.pre[layer - self.first])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorNet {
    layers: Vec<DenseLayer>,
}

impl GeneratorNet {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Validation("network has no layers".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].input_dim() != pair[0].output_dim() {
                return Err(Error::Validation(format!(
                    "layer {} expects input {}, layer {} outputs {}",
                    i + 2,
                    pair[1].input_dim(),
                    i + 1,
                    pair[0].output_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Number of layers `k`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Dimension of `z_i` (`z_0` is the latent).
    pub fn layer_output_dim(&self, i: usize) -> usize {
        if i == 0 {
            self.latent_dim()
        } else {
            self.layers[i - 1].output_dim()
        }
    }

    /// Layer `i`, 1-based.
    pub fn layer(&self, i: usize) -> &DenseLayer {
        &self.layers[i - 1]
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    fn check_range(&self, first: usize, last: usize) -> Result<()> {
        if first == 0 || first > last || last > self.depth() {
            return Err(Error::Range { first, last, depth: self.depth() });
        }
        Ok(())
    }

    pub fn forward(&self, z0: &[f64]) -> Result<(Vec<f64>, ActivationTrace)> {
        self.forward_sub(1, self.depth(), z0)
    }

    /// Applies `G_first^last = G_last o ... o G_first` to `z`.
    pub fn forward_sub(&self, first: usize, last: usize, z: &[f64]) -> Result<(Vec<f64>, ActivationTrace)> {
        self.check_range(first, last)?;
        let expected = self.layer(first).input_dim();
        if z.len() != expected {
            return Err(Error::Shape(format!(
                "layer {first} expects input length {expected}, got {}",
                z.len()
            )));
        }
        let mut values = Vec::with_capacity(last - first + 2);
        let mut pre = Vec::with_capacity(last - first + 1);
        values.push(z.to_vec());
        for layer in &self.layers[first - 1..last] {
            let p = layer.pre_activation(values.last().expect("nonempty"));
            values.push(p.iter().map(|&v| layer.activation.apply(v)).collect());
            pre.push(p);
        }
        let trace = ActivationTrace { first, last, values, pre };
        Ok((trace.output().to_vec(), trace))
    }

    /// Output of `G_first^last` without keeping a trace.
    pub fn eval_sub(&self, first: usize, last: usize, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_sub(first, last, z)?.0)
    }

    /// `J^T cotangent`, with `J` the Jacobian of `G_first^last` at the
    /// traced input.
    pub fn vjp_sub(&self, first: usize, last: usize, trace: &ActivationTrace, cotangent: &[f64]) -> Result<Vec<f64>> {
        self.check_range(first, last)?;
        if trace.first != first || trace.last != last {
            return Err(Error::Trace(format!(
                "trace covers layers {}..={}, requested {first}..={last}",
                trace.first, trace.last
            )));
        }
        for (offset, layer) in self.layers[first - 1..last].iter().enumerate() {
            if trace.pre[offset].len() != layer.output_dim() || trace.values[offset].len() != layer.input_dim() {
                return Err(Error::Trace(format!("trace dims do not match layer {}", first + offset)));
            }
        }
        if cotangent.len() != self.layer(last).output_dim() {
            return Err(Error::Shape(format!(
                "cotangent has length {}, layer {last} outputs {}",
                cotangent.len(),
                self.layer(last).output_dim()
            )));
        }
        let mut grad = cotangent.to_vec();
        for layer_index in (first..=last).rev() {
            let offset = layer_index - first;
            grad = self.layer(layer_index).backward(&trace.pre[offset], &trace.values[offset + 1], &grad);
        }
        Ok(grad)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for layer in &self.layers {
            out.extend_from_slice(&(layer.rows as u32).to_le_bytes());
            out.extend_from_slice(&(layer.cols as u32).to_le_bytes());
            out.push(layer.activation.code());
            if let Activation::LeakyRelu { alpha } = layer.activation {
                out.extend_from_slice(&alpha.to_le_bytes());
            }
            for v in layer.weight.iter().chain(&layer.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = ByteReader { bytes, offset: 0 };
        let magic = reader.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Format { offset: 0, message: format!("bad magic {magic:?}, expected \"PRGW\"") });
        }
        let version_at = reader.offset;
        let version = reader.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Format {
                offset: version_at as u64,
                message: format!("unsupported version {version}"),
            });
        }
        let count = reader.u32("layer count")? as usize;
        let mut layers = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let rows = reader.u32("rows")? as usize;
            let cols = reader.u32("cols")? as usize;
            let code_at = reader.offset;
            let activation = match reader.take(1, "activation code")?[0] {
                0 => Activation::Identity,
                1 => Activation::Relu,
                2 => Activation::LeakyRelu { alpha: reader.f64("leaky relu slope")? },
                3 => Activation::Sigmoid,
                4 => Activation::Tanh,
                other => {
                    return Err(Error::Format {
                        offset: code_at as u64,
                        message: format!("unknown activation code {other}"),
                    })
                }
            };
            let weight = reader.f64s(rows.saturating_mul(cols), "weights")?;
            let bias = reader.f64s(rows, "biases")?;
            layers.push(DenseLayer::new(rows, cols, weight, bias, activation)?);
        }
        if reader.offset != bytes.len() {
            return Err(Error::Format {
                offset: reader.offset as u64,
                message: format!("{} trailing bytes", bytes.len() - reader.offset),
            });
        }
        GeneratorNet::new(layers)
    }
}

const MAGIC: &[u8; 4] = b"PRGW";
const FORMAT_VERSION: u32 = 1;

struct ByteReader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.offset.checked_add(len).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let slice = &self.bytes[self.offset..end];
                self.offset = end;
                Ok(slice)
            }
            None => Err(Error::Format {
                offset: self.offset as u64,
                message: format!(
                    "truncated {what}: need {len} bytes, {} remain",
                    self.bytes.len() - self.offset
                ),
            }),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(count.saturating_mul(8), what)?;
        Ok(raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect())
    }
}

pub fn save_weights(net: &GeneratorNet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, net.to_bytes())?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<GeneratorNet> {
    GeneratorNet::from_bytes(&fs::read(path)?)
}

/// `count` i.i.d. standard-normal latents of length `latent_dim`. Draws are
/// sequential, so a larger `count` extends a smaller one with the same seed.
pub fn sample_latent(latent_dim: usize, count: usize, seed: Seed) -> Result<Vec<Vec<f64>>> {
    if latent_dim == 0 || count == 0 {
        return Err(Error::Dimension(format!(
            "need latent_dim >= 1 and count >= 1, got {latent_dim} and {count}"
        )));
    }
    Ok(standard_normal(latent_dim * count, seed)
        .chunks_exact(latent_dim)
        .map(<[f64]>::to_vec)
        .collect())
}
