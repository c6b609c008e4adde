//! Experiment configuration: a TOML file with dotted sections, plus
//! command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use prilo::solvers::ImageConstraint;
use prilo::{InitScheme, NoiseSchedule, PriloConfig, PriloPhase, Shape2D, StageFlags, VaeSpec};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    Idx,
    PgmDir,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub format: DatasetFormat,
    /// IDX image file or PGM directory.
    pub images: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    /// Required for `pgm-dir`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    /// Index of the first image used.
    #[serde(default)]
    pub offset: usize,
    /// Zero-pad every image to this size (oversampling emulation).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pad_to: Option<[usize; 2]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementKind {
    Fourier,
    GaussianReal,
    GaussianComplex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConfig {
    pub kind: MeasurementKind,
    /// Number of Gaussian measurements.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Write the Gaussian matrix to the output directory.
    #[serde(default)]
    pub dump_matrix: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Er,
    Hio,
    Dpr,
    Prilo,
}

impl MethodName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Er => "er",
            Self::Hio => "hio",
            Self::Dpr => "dpr",
            Self::Prilo => "prilo",
        }
    }

    pub fn uses_generator(self) -> bool {
        matches!(self, Self::Dpr | Self::Prilo)
    }
}

fn default_iters() -> usize {
    1000
}
fn default_beta() -> f64 {
    0.9
}
fn default_dpr_steps() -> usize {
    1000
}
fn default_latent_step() -> f64 {
    0.3
}
fn default_intermediate_step() -> f64 {
    3.0
}
fn default_pixel_max() -> f64 {
    1.0
}
fn default_backproj_step() -> f64 {
    0.02
}
fn default_true() -> bool {
    true
}
fn default_sub_steps() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub target_layer: usize,
    pub repetitions: usize,
    pub forward_steps: usize,
    pub forward_radius: f64,
    #[serde(default = "default_sub_steps")]
    pub backproj_steps: usize,
    /// Defaults to the initial radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backproj_radius: Option<f64>,
    #[serde(default = "default_sub_steps")]
    pub refine_steps: usize,
    /// Defaults to the initial radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine_radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub enabled: bool,
    pub eta: f64,
    pub gamma: f64,
    /// Per-stage switches: initial optimization, steps A, B and C.
    pub init: bool,
    pub forward: bool,
    pub back_projection: bool,
    pub refinement: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        let n = NoiseSchedule::default();
        Self {
            enabled: n.enabled,
            eta: n.eta,
            gamma: n.gamma,
            init: true,
            forward: true,
            back_projection: true,
            refinement: true,
        }
    }
}

impl NoiseConfig {
    pub fn schedule(&self) -> NoiseSchedule {
        NoiseSchedule { eta: self.eta, gamma: self.gamma, enabled: self.enabled }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriloSection {
    pub init_steps: usize,
    pub init_radius: f64,
    #[serde(default = "default_latent_step")]
    pub latent_step_size: f64,
    #[serde(default = "default_intermediate_step")]
    pub intermediate_step_size: f64,
    #[serde(default = "default_backproj_step")]
    pub backproj_step_size: f64,
    #[serde(default = "default_true")]
    pub back_projection: bool,
    #[serde(default = "default_true")]
    pub refinement: bool,
    #[serde(default)]
    pub phases: Vec<PhaseConfig>,
}

impl PriloSection {
    pub fn to_config(&self, noise: &NoiseConfig) -> PriloConfig {
        PriloConfig {
            init_steps: self.init_steps,
            init_radius: self.init_radius,
            phases: self
                .phases
                .iter()
                .map(|p| PriloPhase {
                    target_layer: p.target_layer,
                    repetitions: p.repetitions,
                    forward_steps: p.forward_steps,
                    forward_radius: p.forward_radius,
                    backproj_steps: p.backproj_steps,
                    backproj_radius: p.backproj_radius.unwrap_or(self.init_radius),
                    refine_steps: p.refine_steps,
                    refine_radius: p.refine_radius.unwrap_or(self.init_radius),
                })
                .collect(),
            latent_step_size: self.latent_step_size,
            intermediate_step_size: self.intermediate_step_size,
            backproj_step_size: self.backproj_step_size,
            noise: noise.schedule(),
            noise_stages: StageFlags {
                init: noise.init,
                forward: noise.forward,
                back_projection: noise.back_projection,
                refinement: noise.refinement,
            },
            stages: StageFlags { init: true, forward: true, back_projection: self.back_projection, refinement: self.refinement },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub name: MethodName,
    /// Generator weights (PRGW) for `dpr` and `prilo`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    /// ER/HIO iterations.
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Restrict ER/HIO to the top-left `[rows, cols]` block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<[usize; 2]>,
    /// Upper pixel bound of the ER/HIO image constraint; `inf` leaves only
    /// nonnegativity (and the support, if any).
    #[serde(default = "default_pixel_max")]
    pub pixel_max: f64,
    /// DPR steps.
    #[serde(default = "default_dpr_steps")]
    pub steps: usize,
    #[serde(default = "default_latent_step")]
    pub step_size: f64,
    /// DPR l1 radius around the initial latent; unbounded when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prilo: Option<PriloSection>,
    #[serde(default)]
    pub noise: NoiseConfig,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self { kind: MeasurementKind::Fourier, m: None, dump_matrix: false }
    }
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            name: MethodName::Dpr,
            weights: None,
            iters: default_iters(),
            beta: default_beta(),
            support: None,
            pixel_max: default_pixel_max(),
            steps: default_dpr_steps(),
            step_size: default_latent_step(),
            radius: None,
            prilo: None,
            noise: NoiseConfig::default(),
        }
    }
}

impl MethodConfig {
    pub fn image_constraint(&self, shape: Shape2D) -> ImageConstraint {
        let mut c = match self.support {
            Some([rows, cols]) => ImageConstraint::with_support_box(shape, rows, cols),
            None => ImageConstraint::default(),
        };
        c.upper = self.pixel_max;
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Random,
    Mii,
}

fn default_candidates() -> usize {
    5000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub kind: InitKind,
    #[serde(default = "default_candidates")]
    pub candidates: usize,
    /// Standard deviation of a Gaussian perturbation added to the initial
    /// latent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<f64>,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { kind: InitKind::Random, candidates: default_candidates(), perturbation: None }
    }
}

impl InitConfig {
    pub fn scheme(&self) -> InitScheme {
        match self.kind {
            InitKind::Random => InitScheme::Random,
            InitKind::Mii => InitScheme::Mii { candidates: self.candidates },
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            InitKind::Random => "random".into(),
            InitKind::Mii => format!("mii-{}", self.candidates),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    pub latent_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Use only the first N training images.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_limit: Option<usize>,
}

impl Default for VaeConfig {
    fn default() -> Self {
        let d = VaeSpec::desk_scale();
        Self {
            latent_dim: d.latent_dim,
            hidden_dims: d.hidden_dims,
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            train_limit: None,
        }
    }
}

fn default_restarts() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
    pub out: PathBuf,
    #[serde(default)]
    pub trace: bool,
    /// Trivial-ambiguity registration before PSNR/SSIM; defaults to on for
    /// Fourier measurements and off for Gaussian ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub register: Option<bool>,
    /// Worker threads for the benchmark; 0 uses all cores.
    #[serde(default)]
    pub threads: usize,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub measurement: MeasurementConfig,
    #[serde(default)]
    pub method: MethodConfig,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vae: Option<VaeConfig>,
}

fn must_exist(p: &Path, what: &str) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(HarnessError::Config(format!("{what} {} does not exist", p.display())))
    }
}

/// Command-line overrides applied on top of a loaded file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub limit: Option<usize>,
    pub trace: bool,
    pub no_register: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Loads a config file or a run manifest (which embeds one). Relative
    /// paths are resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = std::path::absolute(parent).map_err(|e| HarnessError::io(parent, e))?;
        config.resolve_paths(&base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.images);
        if let Some(l) = self.dataset.labels.as_mut() {
            fix(l);
        }
        if let Some(w) = self.method.weights.as_mut() {
            fix(w);
        }
        fix(&mut self.out);
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(out) = &overrides.out {
            self.out.clone_from(out);
        }
        if let Some(limit) = overrides.limit {
            self.limit = Some(limit);
        }
        if overrides.trace {
            self.trace = true;
        }
        if overrides.no_register {
            self.register = Some(false);
        }
    }

    pub fn register_enabled(&self) -> bool {
        self.register.unwrap_or(self.measurement.kind == MeasurementKind::Fourier)
    }

    /// Dataset checks only; enough for training.
    pub fn validate_dataset(&self) -> Result<()> {
        must_exist(&self.dataset.images, "dataset")?;
        if let Some(labels) = &self.dataset.labels {
            must_exist(labels, "label file")?;
        }
        if self.dataset.format == DatasetFormat::PgmDir && (self.dataset.height.is_none() || self.dataset.width.is_none()) {
            return Err(HarnessError::Config("pgm-dir datasets need height and width".into()));
        }
        Ok(())
    }

    /// Structural checks and existence of every referenced input file.
    pub fn validate(&self) -> Result<()> {
        self.validate_dataset()?;
        match self.measurement.kind {
            MeasurementKind::Fourier => {}
            _ if self.measurement.m.unwrap_or(0) == 0 => {
                return Err(HarnessError::Config("gaussian measurements need m >= 1".into()))
            }
            _ => {}
        }
        if self.restarts == 0 {
            return Err(HarnessError::Config("restarts must be at least 1".into()));
        }
        if self.method.name.uses_generator() {
            match &self.method.weights {
                Some(w) => must_exist(w, "weights")?,
                None => return Err(HarnessError::Config(format!("method {} needs weights", self.method.name.as_str()))),
            }
        } else if self.measurement.kind != MeasurementKind::Fourier {
            return Err(HarnessError::Config("ER/HIO need Fourier measurements".into()));
        }
        if self.method.name == MethodName::Prilo && self.method.prilo.is_none() {
            return Err(HarnessError::Config("method prilo needs a [method.prilo] section".into()));
        }
        Ok(())
    }

    pub fn vae_spec(&self) -> VaeSpec {
        let v = self.vae.clone().unwrap_or_default();
        VaeSpec {
            latent_dim: v.latent_dim,
            hidden_dims: v.hidden_dims,
            epochs: v.epochs,
            learning_rate: v.learning_rate,
            batch_size: v.batch_size,
            seed: prilo::Seed(self.seed),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }
}
