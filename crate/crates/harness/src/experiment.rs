//! Running a configured method over a dataset: per-image solves, CSV rows,
//! summaries and run manifests.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use prilo::solvers::{er_with, hio_with, TraceOptions};
use prilo::{
    dpr_solve, evaluate, gaussian_matrix, initial_latent, load_weights, prilo_solve, run_with_restarts, GaussianKind,
    GeneratorNet, Magnitudes, MeasurementOperator, MetricReport, PgdSettings, ReconstructionResult, Seed, Shape2D,
};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetFormat, ExperimentConfig, MeasurementKind, MethodName};
use crate::data::{load_image_dir, load_mnist_idx, Dataset};
use crate::error::{HarnessError, Result};

/// Derivation index of the Gaussian matrix seed; image seeds use the image
/// index, which never gets this large.
const MATRIX_STREAM: u64 = u64::MAX - 1;

pub const CSV_HEADER: [&str; 12] = [
    "image_id",
    "method",
    "init",
    "restarts",
    "seed",
    "magnitude_mse",
    "psnr_db",
    "psnr_db_registered",
    "ssim",
    "ssim_registered",
    "wall_ms",
    "error",
];

/// Per-image seed, independent of batching and thread count.
pub fn image_seed(base: u64, image_id: usize) -> Seed {
    Seed(base).derive(image_id as u64)
}

/// Zero-pads an image into the top-left corner of a larger canvas.
pub fn pad_image(image: &[f64], from: Shape2D, to: Shape2D) -> Result<Vec<f64>> {
    if to.height() < from.height() || to.width() < from.width() {
        return Err(HarnessError::Config(format!("cannot pad {from} images to {to}")));
    }
    let mut out = vec![0.0; to.len()];
    for r in 0..from.height() {
        let src = &image[r * from.width()..(r + 1) * from.width()];
        out[r * to.width()..r * to.width() + from.width()].copy_from_slice(src);
    }
    Ok(out)
}

/// Loads the dataset named by the config, applying `offset`, `limit` and
/// `pad_to`. Returns the dataset and the original index of every image.
pub fn load_dataset(config: &ExperimentConfig) -> Result<(Dataset, Vec<usize>)> {
    let ds = &config.dataset;
    let mut data = match ds.format {
        DatasetFormat::Idx => load_mnist_idx(&ds.images, ds.labels.as_deref())?,
        DatasetFormat::PgmDir => {
            let (h, w) = ds
                .height
                .zip(ds.width)
                .ok_or_else(|| HarnessError::Config("pgm-dir datasets need height and width".into()))?;
            load_image_dir(&ds.images, Shape2D::new(h, w)?)?
        }
    };
    let start = ds.offset.min(data.len());
    let end = config.limit.map_or(data.len(), |l| (start + l).min(data.len()));
    data.images = data.images[start..end].to_vec();
    data.labels = data.labels.map(|l| l[start..end].to_vec());
    if let Some([h, w]) = ds.pad_to {
        let to = Shape2D::new(h, w)?;
        data.images = data.images.iter().map(|img| pad_image(img, data.shape, to)).collect::<Result<_>>()?;
        data.shape = to;
    }
    Ok((data, (start..end).collect()))
}

pub fn build_operator(config: &ExperimentConfig, shape: Shape2D) -> Result<MeasurementOperator> {
    let kind = match config.measurement.kind {
        MeasurementKind::Fourier => return Ok(MeasurementOperator::fourier(shape)),
        MeasurementKind::GaussianReal => GaussianKind::Real,
        MeasurementKind::GaussianComplex => GaussianKind::Complex,
    };
    let m = config.measurement.m.ok_or_else(|| HarnessError::Config("gaussian measurements need m".into()))?;
    let matrix = gaussian_matrix(m, shape.len(), kind, Seed(config.seed).derive(MATRIX_STREAM))?;
    Ok(matrix.into())
}

/// Writes the measurement matrix as CSV, one row per measurement. Complex
/// entries are written as `re` and `im` column pairs.
pub fn dump_matrix(op: &MeasurementOperator, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    match op {
        MeasurementOperator::GaussianReal { rows, cols, data } => {
            for r in 0..*rows {
                w.write_record(data[r * cols..(r + 1) * cols].iter().map(|v| v.to_string()))?;
            }
        }
        MeasurementOperator::GaussianComplex { rows, cols, data } => {
            for r in 0..*rows {
                w.write_record(data[r * cols..(r + 1) * cols].iter().flat_map(|c| [c.re.to_string(), c.im.to_string()]))?;
            }
        }
        MeasurementOperator::Fourier2D(_) => return Ok(()),
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub image_id: usize,
    pub method: String,
    pub init: String,
    pub restarts: usize,
    pub seed: u64,
    pub magnitude_mse: f64,
    pub psnr_db: f64,
    pub psnr_db_registered: f64,
    pub ssim: f64,
    pub ssim_registered: f64,
    pub wall_ms: f64,
    pub error: String,
}

/// A solved image: its row plus, on success, the full result and metrics.
#[derive(Clone, Debug)]
pub struct ImageOutcome {
    pub row: ImageRow,
    pub result: Option<ReconstructionResult>,
    pub metrics: Option<MetricReport>,
}

/// Everything needed to solve images under one config.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub data: Dataset,
    pub image_ids: Vec<usize>,
    pub op: MeasurementOperator,
    pub net: Option<GeneratorNet>,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let net = match (&config.method.weights, config.method.name.uses_generator()) {
            (Some(path), true) => Some(load_weights(path)?),
            _ => None,
        };
        Self::with_net(config, net)
    }

    /// Like [`Experiment::prepare`] with an in-memory generator instead of
    /// the weights file.
    pub fn with_net(config: ExperimentConfig, net: Option<GeneratorNet>) -> Result<Self> {
        let (data, image_ids) = load_dataset(&config)?;
        let op = build_operator(&config, data.shape)?;
        if config.method.name.uses_generator() {
            let net = net.as_ref().ok_or_else(|| HarnessError::Config("generator methods need a network".into()))?;
            if net.output_dim() != data.shape.len() {
                return Err(HarnessError::Config(format!(
                    "generator outputs {} pixels, images have {}",
                    net.output_dim(),
                    data.shape.len()
                )));
            }
        }
        Ok(Self { config, data, image_ids, op, net })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn init_label(&self) -> String {
        if self.config.method.name.uses_generator() {
            self.config.init.label()
        } else {
            "uniform".into()
        }
    }

    fn trace_options(&self, target: &[f64], record: bool) -> TraceOptions {
        TraceOptions {
            record,
            reference: record.then(|| target.to_vec()),
            shape: Some(self.data.shape),
            register: self.config.register_enabled(),
        }
    }

    /// Solves the image at position `pos` of the loaded set.
    pub fn solve(&self, pos: usize, record_trace: bool) -> ImageOutcome {
        let image_id = self.image_ids[pos];
        let seed = image_seed(self.config.seed, image_id);
        let start = Instant::now();
        let target = &self.data.images[pos];
        let outcome = self.solve_inner(target, seed, record_trace);
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let mut row = ImageRow {
            image_id,
            method: self.config.method.name.as_str().into(),
            init: self.init_label(),
            restarts: self.config.restarts,
            seed: seed.0,
            magnitude_mse: f64::NAN,
            psnr_db: f64::NAN,
            psnr_db_registered: f64::NAN,
            ssim: f64::NAN,
            ssim_registered: f64::NAN,
            wall_ms,
            error: String::new(),
        };
        match outcome {
            Ok((result, metrics)) => {
                row.magnitude_mse = metrics.magnitude_mse;
                row.psnr_db = metrics.psnr_db;
                row.psnr_db_registered = metrics.psnr_db_registered;
                row.ssim = metrics.ssim;
                row.ssim_registered = metrics.ssim_registered;
                ImageOutcome { row, result: Some(result), metrics: Some(metrics) }
            }
            Err(e) => {
                row.error = e.to_string();
                ImageOutcome { row, result: None, metrics: None }
            }
        }
    }

    fn solve_inner(&self, target: &[f64], seed: Seed, record: bool) -> Result<(ReconstructionResult, MetricReport)> {
        let y = self.op.apply_magnitude(target)?;
        let trace = self.trace_options(target, record);
        let result = run_with_restarts(self.config.restarts, seed, false, |_, s| self.restart(&y, s, &trace))?;
        let mse = result.magnitude_loss / self.op.output_len() as f64;
        let metrics = evaluate(&result.image, target, self.data.shape, mse, self.config.register_enabled())?;
        Ok((result, metrics))
    }

    fn restart(&self, y: &Magnitudes, seed: Seed, trace: &TraceOptions) -> prilo::Result<ReconstructionResult> {
        let method = &self.config.method;
        let shape = self.data.shape;
        match method.name {
            MethodName::Er | MethodName::Hio => {
                let mut rng = seed.rng();
                let x0: Vec<f64> = (0..shape.len()).map(|_| rng.random::<f64>()).collect();
                let constraint = method.image_constraint(shape);
                if method.name == MethodName::Er {
                    er_with(y, shape, method.iters, &x0, &constraint, trace)
                } else {
                    hio_with(y, shape, method.iters, method.beta, &x0, &constraint, trace)
                }
            }
            MethodName::Dpr | MethodName::Prilo => {
                let net = self.net.as_ref().expect("checked in with_net");
                let z0 = initial_latent(
                    self.config.init.scheme(),
                    &self.op,
                    y,
                    net,
                    seed.derive(0),
                    self.config.init.perturbation,
                )?;
                if method.name == MethodName::Dpr {
                    let settings = PgdSettings {
                        steps: method.steps,
                        step_size: method.step_size,
                        noise: method.noise.schedule(),
                        seed: seed.derive(1),
                    };
                    dpr_solve(&self.op, y, net, &z0, &settings, method.radius.unwrap_or(f64::INFINITY), trace)
                } else {
                    let section = method.prilo.as_ref().expect("validated");
                    prilo_solve(&self.op, y, net, &z0, &section.to_config(&method.noise), seed.derive(1), trace)
                }
            }
        }
    }

    /// Solves every image on a pool of `config.threads` workers (0 means
    /// all cores). Outcomes come back in image order.
    pub fn run_all(&self, record_trace: bool) -> Result<Vec<ImageOutcome>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.threads)
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
        Ok(pool.install(|| (0..self.len()).into_par_iter().map(|pos| self.solve(pos, record_trace)).collect()))
    }
}

pub fn write_rows(path: &Path, rows: &[ImageRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_rows(path: &Path) -> Result<Vec<ImageRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

/// Mean, median and normal-approximation 95% interval of one column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation over `sqrt(count)`; NaN below two values.
    pub stderr: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

impl ColumnSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n < 2 {
            f64::NAN
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Self {
            count: n,
            mean,
            median: median(values),
            stderr,
            ci95_low: mean - 1.96 * stderr,
            ci95_high: mean + 1.96 * stderr,
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub images: usize,
    pub failures: usize,
    pub magnitude_mse: ColumnSummary,
    pub psnr_db: ColumnSummary,
    pub psnr_db_registered: ColumnSummary,
    pub ssim: ColumnSummary,
    pub ssim_registered: ColumnSummary,
}

impl Summary {
    /// Failed rows are counted but left out of the statistics.
    pub fn of(rows: &[ImageRow]) -> Self {
        let ok: Vec<&ImageRow> = rows.iter().filter(|r| r.error.is_empty()).collect();
        let col = |f: fn(&ImageRow) -> f64| ColumnSummary::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
        Self {
            images: rows.len(),
            failures: rows.len() - ok.len(),
            magnitude_mse: col(|r| r.magnitude_mse),
            psnr_db: col(|r| r.psnr_db),
            psnr_db_registered: col(|r| r.psnr_db_registered),
            ssim: col(|r| r.ssim),
            ssim_registered: col(|r| r.ssim_registered),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub tool_version: String,
    pub started: String,
    pub finished: String,
    pub image_ids: Vec<usize>,
    /// Per-image seeds as decimal strings (TOML integers are signed).
    pub image_seeds: Vec<String>,
}

/// The resolved config plus a `[run]` table. Loading a manifest as a config
/// ignores the `[run]` table, which is how runs are replayed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub config: ExperimentConfig,
    pub run: RunInfo,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))?;
        fs::write(path, text).map_err(|e| HarnessError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Files written by [`benchmark`].
#[derive(Clone, Debug)]
pub struct BenchmarkOutput {
    pub rows: Vec<ImageRow>,
    pub summary: Summary,
    pub csv: PathBuf,
    pub manifest: PathBuf,
}

/// Runs the configured method over the image set and writes `results.csv`,
/// `summary.toml`, `manifest.toml` and (with `trace`) per-image trace files
/// into the output directory.
pub fn benchmark(config: ExperimentConfig) -> Result<BenchmarkOutput> {
    let started = now();
    let experiment = Experiment::prepare(config)?;
    run_benchmark(&experiment, started)
}

pub fn run_benchmark(experiment: &Experiment, started: String) -> Result<BenchmarkOutput> {
    let config = &experiment.config;
    let out = &config.out;
    create_dir(out)?;
    if config.measurement.dump_matrix {
        dump_matrix(&experiment.op, &out.join("matrix.csv"))?;
    }
    let outcomes = experiment.run_all(config.trace)?;
    if config.trace {
        let dir = out.join("traces");
        create_dir(&dir)?;
        for o in &outcomes {
            if let Some(result) = &o.result {
                write_trace(&dir.join(format!("{}.csv", o.row.image_id)), result)?;
            }
        }
    }
    let rows: Vec<ImageRow> = outcomes.into_iter().map(|o| o.row).collect();
    let csv = out.join("results.csv");
    write_rows(&csv, &rows)?;
    let summary = Summary::of(&rows);
    let summary_path = out.join("summary.toml");
    let text = toml::to_string(&summary).map_err(|e| HarnessError::Config(e.to_string()))?;
    fs::write(&summary_path, text).map_err(|e| HarnessError::io(&summary_path, e))?;
    let manifest = RunManifest {
        config: config.clone(),
        run: RunInfo {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            started,
            finished: now(),
            image_ids: experiment.image_ids.clone(),
            image_seeds: experiment.image_ids.iter().map(|&id| image_seed(config.seed, id).0.to_string()).collect(),
        },
    };
    let manifest_path = out.join("manifest.toml");
    manifest.write(&manifest_path)?;
    Ok(BenchmarkOutput { rows, summary, csv, manifest: manifest_path })
}

/// Iteration, magnitude loss and (when a reference was given) PSNR.
pub fn write_trace(path: &Path, result: &ReconstructionResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "magnitude_loss", "psnr_db"])?;
    for (k, loss) in result.loss_trace.iter().enumerate() {
        let p = result.psnr_trace.get(k).map_or(String::new(), |p| p.to_string());
        w.write_record([k.to_string(), loss.to_string(), p])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padding_places_image_top_left() {
        let from = Shape2D::new(2, 2).unwrap();
        let to = Shape2D::new(3, 4).unwrap();
        let p = pad_image(&[1.0, 2.0, 3.0, 4.0], from, to).unwrap();
        assert_eq!(p, vec![1.0, 2.0, 0.0, 0.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(pad_image(&[0.0; 4], from, Shape2D::new(1, 4).unwrap()).is_err());
    }

    #[test]
    fn column_summary_arithmetic() {
        let s = ColumnSummary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        let se = (5.0f64 / 3.0 / 4.0).sqrt();
        assert!((s.stderr - se).abs() < 1e-15);
        assert!((s.ci95_high - s.ci95_low - 2.0 * 1.96 * se).abs() < 1e-12);
        assert!(ColumnSummary::of(&[1.0]).stderr.is_nan());
    }

    #[test]
    fn image_seeds_do_not_depend_on_order() {
        assert_eq!(image_seed(5, 3), image_seed(5, 3));
        assert_ne!(image_seed(5, 3), image_seed(5, 4));
        assert_ne!(image_seed(5, 3), image_seed(6, 3));
    }
}
