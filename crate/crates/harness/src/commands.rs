//! The `train`, `solve`, `benchmark` and `inspect-weights` commands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use prilo::{load_weights, save_weights, train_vae, MetricReport, ReconstructionResult};
use serde::{Deserialize, Serialize};

use crate::config::{DatasetFormat, ExperimentConfig};
use crate::data::{load_mnist_idx, write_pgm};
use crate::error::{HarnessError, Result};
use crate::experiment::{self, now, write_trace, BenchmarkOutput, Experiment};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainInfo {
    pub tool_version: String,
    pub started: String,
    pub finished: String,
    pub images: usize,
    pub epoch_losses: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainManifest {
    #[serde(flatten)]
    pub config: ExperimentConfig,
    pub train: TrainInfo,
}

/// Trains the VAE on the configured dataset and writes `decoder.prgw` and
/// `train_manifest.toml` into the output directory.
pub fn train(config: &ExperimentConfig) -> Result<PathBuf> {
    config.validate_dataset()?;
    let started = now();
    let spec = config.vae_spec();
    let mut data = match config.dataset.format {
        DatasetFormat::Idx => load_mnist_idx(&config.dataset.images, None)?,
        DatasetFormat::PgmDir => experiment::load_dataset(config)?.0,
    };
    if let Some(limit) = config.vae.as_ref().and_then(|v| v.train_limit) {
        data.images.truncate(limit);
    }
    let trained = train_vae(&data.images, &spec)?;
    fs::create_dir_all(&config.out).map_err(|e| HarnessError::io(&config.out, e))?;
    let weights = config.out.join("decoder.prgw");
    save_weights(&trained.decoder, &weights)?;
    let manifest = TrainManifest {
        config: config.clone(),
        train: TrainInfo {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            started,
            finished: now(),
            images: data.images.len(),
            epoch_losses: trained.epoch_losses,
        },
    };
    let path = config.out.join("train_manifest.toml");
    let text = toml::to_string(&manifest).map_err(|e| HarnessError::Config(e.to_string()))?;
    fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    Ok(weights)
}

#[derive(Clone, Debug)]
pub struct SolveOutput {
    pub image_id: usize,
    pub result: ReconstructionResult,
    pub metrics: MetricReport,
    pub image_path: PathBuf,
    pub trace_path: Option<PathBuf>,
}

/// Solves one image (dataset index `index`), writes the reconstruction as
/// PGM and, with `config.trace`, the per-iteration trace.
pub fn solve(config: &ExperimentConfig, index: usize) -> Result<SolveOutput> {
    let mut config = config.clone();
    config.dataset.offset += index;
    config.limit = Some(1);
    let experiment = Experiment::prepare(config)?;
    if experiment.is_empty() {
        return Err(HarnessError::Config(format!("image index {index} is past the end of the dataset")));
    }
    let outcome = experiment.solve(0, experiment.config.trace);
    let (result, metrics) = match (outcome.result, outcome.metrics) {
        (Some(r), Some(m)) => (r, m),
        _ => return Err(HarnessError::Data(outcome.row.error)),
    };
    let out = &experiment.config.out;
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let image_id = outcome.row.image_id;
    let image_path = out.join(format!("solve_{image_id}.pgm"));
    write_pgm(&image_path, experiment.data.shape, &result.image)?;
    let trace_path = if experiment.config.trace {
        let p = out.join(format!("trace_{image_id}.csv"));
        write_trace(&p, &result)?;
        Some(p)
    } else {
        None
    };
    Ok(SolveOutput { image_id, result, metrics, image_path, trace_path })
}

/// One-line metrics summary.
pub fn metrics_line(image_id: usize, m: &MetricReport) -> String {
    let mut s = format!(
        "image {image_id}: magnitude_mse {:.6e} psnr {:.2} dB ssim {:.4}",
        m.magnitude_mse, m.psnr_db, m.ssim
    );
    if m.registered {
        let _ = write!(
            s,
            " | registered psnr {:.2} dB ssim {:.4} (shift {},{} flip {})",
            m.psnr_db_registered, m.ssim_registered, m.shift.0, m.shift.1, m.flipped
        );
    }
    s
}

pub fn benchmark(config: ExperimentConfig) -> Result<BenchmarkOutput> {
    experiment::benchmark(config)
}

/// Human-readable layer listing of a PRGW file.
pub fn inspect_weights(path: &Path) -> Result<String> {
    let net = load_weights(path)?;
    let mut s = format!("{}: {} layers, latent {} -> output {}\n", path.display(), net.depth(), net.latent_dim(), net.output_dim());
    for (i, layer) in net.layers().iter().enumerate() {
        let w = layer.weight();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let _ = writeln!(
            s,
            "  layer {}: {} -> {} {:?}, |W|_F {:.4}",
            i + 1,
            layer.input_dim(),
            layer.output_dim(),
            layer.activation(),
            norm
        );
    }
    Ok(s)
}
