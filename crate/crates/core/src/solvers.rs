//! Reconstruction algorithms: Fienup's ER and HIO, latent-space descent
//! (DPR) and intermediate layer optimization (PRILO), plus a restart
//! wrapper.

use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generator::GeneratorNet;
use crate::math::{norm_sq, Fft2, Seed, Shape2D};
use crate::measurement::{Magnitudes, MeasurementOperator, DEFAULT_PHASE_EPS};
use crate::metrics::{psnr, register_trivial};
use crate::projection::{pgd_observed, project_l1, L1Ball, NoiseSchedule, PgdOutcome, PgdSettings};

/// Ball-constraint bookkeeping over every projected iterate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FeasibilityAudit {
    pub checked: usize,
    pub violations: usize,
    /// Largest `||x - center||_1 / radius` observed.
    pub max_ratio: f64,
}

impl FeasibilityAudit {
    fn record(&mut self, x: &[f64], ball: &L1Ball) {
        if !ball.is_bounded() {
            return;
        }
        self.checked += 1;
        let ratio = crate::math::l1_distance(x, &ball.center) / ball.radius;
        self.max_ratio = self.max_ratio.max(ratio);
        if !ball.contains(x) {
            self.violations += 1;
        }
    }

    pub fn merge(&mut self, other: &FeasibilityAudit) {
        self.checked += other.checked;
        self.violations += other.violations;
        self.max_ratio = self.max_ratio.max(other.max_ratio);
    }
}

#[derive(Clone, Debug, Default)]
pub struct ReconstructionResult {
    pub image: Vec<f64>,
    /// Final latent; empty for the classical solvers.
    pub z0_final: Vec<f64>,
    /// `sum_j (|A x|_j - y_j)^2` of `image`.
    pub magnitude_loss: f64,
    pub restart_index: usize,
    /// Per-restart losses (NaN for failed restarts); empty without restarts.
    pub restart_losses: Vec<f64>,
    /// Magnitude loss of the current estimate after every iteration.
    pub loss_trace: Vec<f64>,
    /// PSNR of the current estimate after every iteration.
    pub psnr_trace: Vec<f64>,
    pub wall_ms: f64,
    pub feasibility: FeasibilityAudit,
}

/// What to record per iteration. PSNR needs the ground truth and, for
/// Fourier measurements, is usually computed after registration.
#[derive(Clone, Debug, Default)]
pub struct TraceOptions {
    pub record: bool,
    pub reference: Option<Vec<f64>>,
    pub shape: Option<Shape2D>,
    pub register: bool,
}

impl TraceOptions {
    pub fn off() -> Self {
        Self::default()
    }

    fn psnr_of(&self, image: &[f64]) -> Option<f64> {
        let reference = self.reference.as_deref()?;
        match (self.register, self.shape) {
            (true, Some(shape)) => {
                let aligned = register_trivial(image, reference, shape).ok()?.aligned;
                psnr(&aligned, reference, 1.0).ok()
            }
            _ => psnr(image, reference, 1.0).ok(),
        }
    }
}

#[derive(Default)]
struct Recorder {
    losses: Vec<f64>,
    psnrs: Vec<f64>,
}

impl Recorder {
    fn push(&mut self, options: &TraceOptions, loss: f64, image: &[f64]) {
        self.losses.push(loss);
        if let Some(p) = options.psnr_of(image) {
            self.psnrs.push(p);
        }
    }
}

// ---------------------------------------------------------------------------
// Classical alternating projections

/// Image-domain constraint for ER/HIO: pixel range plus an optional support.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageConstraint {
    pub lower: f64,
    pub upper: f64,
    pub support: Option<Vec<bool>>,
}

impl Default for ImageConstraint {
    fn default() -> Self {
        Self { lower: 0.0, upper: 1.0, support: None }
    }
}

impl ImageConstraint {
    /// Known support: the top-left `rows x cols` block of `shape`.
    pub fn with_support_box(shape: Shape2D, rows: usize, cols: usize) -> Self {
        let support = (0..shape.len()).map(|p| p / shape.width() < rows && p % shape.width() < cols).collect();
        Self { support: Some(support), ..Self::default() }
    }

    fn in_support(&self, p: usize) -> bool {
        self.support.as_ref().is_none_or(|s| s[p])
    }

    fn satisfied(&self, p: usize, v: f64) -> bool {
        self.in_support(p) && v >= self.lower && v <= self.upper
    }

    fn project(&self, p: usize, v: f64) -> f64 {
        if self.in_support(p) {
            v.clamp(self.lower, self.upper)
        } else {
            0.0
        }
    }
}

struct FourierMagnitudeStep<'a> {
    fft: Fft2,
    y: &'a [f64],
}

impl FourierMagnitudeStep<'_> {
    /// Returns `(loss(x), Re(idft2(y * phase(dft2(x)))))`.
    fn substitute(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut c: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward_in_place(&mut c);
        let mut loss = 0.0;
        for (cj, &yj) in c.iter_mut().zip(self.y) {
            let modulus = cj.norm();
            loss += (modulus - yj).powi(2);
            *cj = if modulus == 0.0 {
                Complex64::new(yj, 0.0)
            } else {
                *cj * (yj / modulus)
            };
        }
        self.fft.inverse_in_place(&mut c);
        (loss, c.iter().map(|v| v.re).collect())
    }

    fn loss(&self, x: &[f64]) -> f64 {
        self.substitute(x).0
    }
}

fn check_fourier_inputs(y: &Magnitudes, shape: Shape2D, x0: &[f64], constraint: &ImageConstraint) -> Result<()> {
    shape.check(y.len(), "magnitudes")?;
    shape.check(x0.len(), "start image")?;
    if let Some(s) = &constraint.support {
        shape.check(s.len(), "support mask")?;
    }
    Ok(())
}

/// Error reduction with the default `[0, 1]` constraint.
pub fn er(y: &Magnitudes, shape: Shape2D, iters: usize, x0: &[f64]) -> Result<ReconstructionResult> {
    er_with(y, shape, iters, x0, &ImageConstraint::default(), &TraceOptions::off())
}

pub fn er_with(
    y: &Magnitudes,
    shape: Shape2D,
    iters: usize,
    x0: &[f64],
    constraint: &ImageConstraint,
    trace: &TraceOptions,
) -> Result<ReconstructionResult> {
    check_fourier_inputs(y, shape, x0, constraint)?;
    let start = Instant::now();
    let step = FourierMagnitudeStep { fft: Fft2::new(shape), y: y.as_slice() };
    let mut x: Vec<f64> = x0.iter().enumerate().map(|(p, &v)| constraint.project(p, v)).collect();
    let mut recorder = Recorder::default();
    let mut loss = step.loss(&x);
    for _ in 0..iters {
        let (_, substituted) = step.substitute(&x);
        x = substituted.iter().enumerate().map(|(p, &v)| constraint.project(p, v)).collect();
        loss = step.loss(&x);
        if trace.record {
            recorder.push(trace, loss, &x);
        }
    }
    Ok(ReconstructionResult {
        image: x,
        magnitude_loss: loss,
        loss_trace: recorder.losses,
        psnr_trace: recorder.psnrs,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        ..Default::default()
    })
}

/// Hybrid input-output with the default `[0, 1]` constraint.
pub fn hio(y: &Magnitudes, shape: Shape2D, iters: usize, beta: f64, x0: &[f64]) -> Result<ReconstructionResult> {
    hio_with(y, shape, iters, beta, x0, &ImageConstraint::default(), &TraceOptions::off())
}

/// Pixels where the magnitude-substituted image `x'` meets the constraint
/// take `x'`; the rest take `x - beta x'`. The returned image is the
/// constraint projection of the `x'` with the lowest magnitude loss.
pub fn hio_with(
    y: &Magnitudes,
    shape: Shape2D,
    iters: usize,
    beta: f64,
    x0: &[f64],
    constraint: &ImageConstraint,
    trace: &TraceOptions,
) -> Result<ReconstructionResult> {
    check_fourier_inputs(y, shape, x0, constraint)?;
    let start = Instant::now();
    let step = FourierMagnitudeStep { fft: Fft2::new(shape), y: y.as_slice() };
    let mut x = x0.to_vec();
    let mut best: Vec<f64> = x.iter().enumerate().map(|(p, &v)| constraint.project(p, v)).collect();
    let mut best_loss = step.loss(&best);
    let mut recorder = Recorder::default();
    for _ in 0..iters {
        let (_, substituted) = step.substitute(&x);
        let candidate: Vec<f64> = substituted.iter().enumerate().map(|(p, &v)| constraint.project(p, v)).collect();
        let loss = step.loss(&candidate);
        if loss < best_loss {
            best_loss = loss;
            best.clone_from(&candidate);
        }
        if trace.record {
            recorder.push(trace, loss, &candidate);
        }
        for (p, (xi, &s)) in x.iter_mut().zip(&substituted).enumerate() {
            *xi = if constraint.satisfied(p, s) { s } else { *xi - beta * s };
        }
    }
    Ok(ReconstructionResult {
        image: best,
        magnitude_loss: best_loss,
        loss_trace: recorder.losses,
        psnr_trace: recorder.psnrs,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        ..Default::default()
    })
}

// ---------------------------------------------------------------------------
// Generator-based solvers

/// Measurement fit through (part of) a generator. Gradient steps use the
/// loss divided by the operator's energy gain, so step sizes and noise levels
/// mean the same for Fourier and Gaussian measurements; reported losses stay
/// unscaled.
struct LatentObjective<'a> {
    op: &'a MeasurementOperator,
    y: &'a Magnitudes,
    net: &'a GeneratorNet,
    scale: f64,
}

impl<'a> LatentObjective<'a> {
    fn new(op: &'a MeasurementOperator, y: &'a Magnitudes, net: &'a GeneratorNet) -> Result<Self> {
        if op.input_len() != net.output_dim() {
            return Err(Error::Shape(format!(
                "generator outputs {} pixels, operator expects {}",
                net.output_dim(),
                op.input_len()
            )));
        }
        if y.len() != op.output_len() {
            return Err(Error::Shape(format!(
                "{} magnitudes for an operator with {} outputs",
                y.len(),
                op.output_len()
            )));
        }
        Ok(Self { op, y, net, scale: 1.0 / op.energy_gain() })
    }

    /// Scaled loss and gradient of `z -> || |A G_first^k(z)| - y ||^2`.
    fn eval_from(&self, first: usize, z: &[f64]) -> (f64, Vec<f64>) {
        let last = self.net.depth();
        let (image, trace) = self.net.forward_sub(first, last, z).expect("validated dims");
        let (loss, grad_x) = self.op.loss_and_grad(&image, self.y, DEFAULT_PHASE_EPS).expect("validated dims");
        let grad = self.net.vjp_sub(first, last, &trace, &grad_x).expect("trace from forward_sub");
        (loss * self.scale, grad.into_iter().map(|g| g * self.scale).collect())
    }

    fn image_from(&self, first: usize, z: &[f64]) -> Vec<f64> {
        self.net.eval_sub(first, self.net.depth(), z).expect("validated dims")
    }

    fn raw_loss(&self, image: &[f64]) -> f64 {
        self.op.magnitude_loss(image, self.y).expect("validated dims")
    }
}

/// Latent-only reconstruction: minimizes `|| |A G(z)| - y ||^2` over `z`,
/// optionally inside `B_radius(z0_init)` (`f64::INFINITY` for none).
pub fn dpr_solve(
    op: &MeasurementOperator,
    y: &Magnitudes,
    net: &GeneratorNet,
    z0_init: &[f64],
    settings: &PgdSettings,
    radius: f64,
    trace: &TraceOptions,
) -> Result<ReconstructionResult> {
    let start = Instant::now();
    let objective = LatentObjective::new(op, y, net)?;
    check_latent(net, z0_init)?;
    let ball = if radius.is_finite() {
        L1Ball::new(z0_init.to_vec(), radius)?
    } else {
        L1Ball::unbounded(z0_init.to_vec())
    };
    let mut recorder = Recorder::default();
    let mut audit = FeasibilityAudit::default();
    let outcome = pgd_observed(
        |z| objective.eval_from(1, z),
        z0_init,
        &ball,
        settings,
        |_, z, loss| {
            audit.record(z, &ball);
            if trace.record {
                let image = objective.image_from(1, z);
                recorder.push(trace, loss / objective.scale, &image);
            }
        },
    )?;
    let image = objective.image_from(1, &outcome.x_best);
    Ok(ReconstructionResult {
        magnitude_loss: objective.raw_loss(&image),
        image,
        z0_final: outcome.x_best,
        loss_trace: recorder.losses,
        psnr_trace: recorder.psnrs,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        feasibility: audit,
        ..Default::default()
    })
}

fn check_latent(net: &GeneratorNet, z: &[f64]) -> Result<()> {
    if z.len() != net.latent_dim() {
        return Err(Error::Shape(format!(
            "latent has length {}, generator expects {}",
            z.len(),
            net.latent_dim()
        )));
    }
    Ok(())
}

/// Steps A/B/C applied `repetitions` times to intermediate layer
/// `target_layer`.
#[derive(Clone, Debug, PartialEq)]
pub struct PriloPhase {
    pub target_layer: usize,
    pub repetitions: usize,
    pub forward_steps: usize,
    /// `r_i`
    pub forward_radius: f64,
    pub backproj_steps: usize,
    /// `s_i`
    pub backproj_radius: f64,
    pub refine_steps: usize,
    /// `r_0`
    pub refine_radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageFlags {
    pub init: bool,
    pub forward: bool,
    pub back_projection: bool,
    pub refinement: bool,
}

impl StageFlags {
    pub const ALL: StageFlags = StageFlags { init: true, forward: true, back_projection: true, refinement: true };
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriloConfig {
    pub init_steps: usize,
    pub init_radius: f64,
    pub phases: Vec<PriloPhase>,
    /// Step size for `z_0` in the initial optimization and step C.
    pub latent_step_size: f64,
    /// Step size for `z_i` in step A.
    pub intermediate_step_size: f64,
    /// Step size for `z_0` in step B.
    pub backproj_step_size: f64,
    pub noise: NoiseSchedule,
    /// Stages that receive gradient noise.
    pub noise_stages: StageFlags,
    /// Stages that run; `init` and `forward` are always on. Disabling back
    /// projection leaves the estimate at `G_{i+1}^k(z_i*)`.
    pub stages: StageFlags,
}

impl PriloConfig {
    pub fn validate(&self, depth: usize) -> Result<()> {
        if !(self.init_radius > 0.0) {
            return Err(Error::Config(format!("init radius {} must be positive", self.init_radius)));
        }
        for size in [self.latent_step_size, self.intermediate_step_size, self.backproj_step_size] {
            if !(size > 0.0) {
                return Err(Error::Config(format!("step size {size} must be positive")));
            }
        }
        let mut previous = 0;
        for (idx, phase) in self.phases.iter().enumerate() {
            if phase.target_layer == 0 || phase.target_layer >= depth {
                return Err(Error::Config(format!(
                    "phase {idx} targets layer {}, needs 1 <= i < {depth}",
                    phase.target_layer
                )));
            }
            if phase.target_layer < previous {
                return Err(Error::Config(format!(
                    "phase {idx} targets layer {} after layer {previous}; layers must go left to right",
                    phase.target_layer
                )));
            }
            previous = phase.target_layer;
            if phase.repetitions == 0 {
                return Err(Error::Config(format!("phase {idx} has zero repetitions")));
            }
            for r in [phase.forward_radius, phase.backproj_radius, phase.refine_radius] {
                if !(r > 0.0) {
                    return Err(Error::Config(format!("phase {idx} radius {r} must be positive")));
                }
            }
        }
        if self.stages.refinement && !self.stages.back_projection {
            return Err(Error::Config("refinement requires back-projection".into()));
        }
        Ok(())
    }
}

fn ball(center: Vec<f64>, radius: f64) -> L1Ball {
    if radius.is_finite() {
        L1Ball { center, radius }
    } else {
        L1Ball::unbounded(center)
    }
}

/// Current estimate: either a latent or an intermediate representation.
enum Estimate {
    Latent(Vec<f64>),
    Intermediate { layer: usize, z: Vec<f64> },
}

/// Intermediate layer optimization. `seed` drives the gradient noise: the
/// initial optimization uses it directly, later stages use derived seeds.
pub fn prilo_solve(
    op: &MeasurementOperator,
    y: &Magnitudes,
    net: &GeneratorNet,
    z0_init: &[f64],
    config: &PriloConfig,
    seed: Seed,
    trace: &TraceOptions,
) -> Result<ReconstructionResult> {
    let start = Instant::now();
    config.validate(net.depth())?;
    let objective = LatentObjective::new(op, y, net)?;
    check_latent(net, z0_init)?;

    let mut recorder = Recorder::default();
    let mut audit = FeasibilityAudit::default();
    let mut stage = 0u64;
    let mut settings = |steps: usize, step_size: f64, noisy: bool| {
        let s = PgdSettings {
            steps,
            step_size,
            noise: NoiseSchedule { enabled: config.noise.enabled && noisy, ..config.noise },
            seed: if stage == 0 { seed } else { seed.derive(stage) },
        };
        stage += 1;
        s
    };

    // Runs PGD on a magnitude objective starting at layer `first`, recording
    // feasibility and traces.
    let run_magnitude = |first: usize, x0: &[f64], ball: &L1Ball, s: &PgdSettings, audit: &mut FeasibilityAudit, recorder: &mut Recorder| -> Result<PgdOutcome> {
        pgd_observed(
            |z| objective.eval_from(first, z),
            x0,
            ball,
            s,
            |_, z, loss| {
                audit.record(z, ball);
                if trace.record {
                    let image = objective.image_from(first, z);
                    recorder.push(trace, loss / objective.scale, &image);
                }
            },
        )
    };

    // Initial optimization of z_0.
    let init_ball = ball(z0_init.to_vec(), config.init_radius);
    let s = settings(config.init_steps, config.latent_step_size, config.noise_stages.init);
    let init = run_magnitude(1, z0_init, &init_ball, &s, &mut audit, &mut recorder)?;
    let mut latest_latent = init.x_best.clone();
    let mut estimate = Estimate::Latent(init.x_best);

    let image_of = |e: &Estimate| match e {
        Estimate::Latent(z) => objective.image_from(1, z),
        Estimate::Intermediate { layer, z } => objective.image_from(layer + 1, z),
    };
    let first_image = image_of(&estimate);
    let mut best = (objective.raw_loss(&first_image), first_image, latest_latent.clone());

    for phase in &config.phases {
        let i = phase.target_layer;
        for _ in 0..phase.repetitions {
            let z_i = match &estimate {
                Estimate::Latent(z0) => net.eval_sub(1, i, z0)?,
                Estimate::Intermediate { layer, z } if *layer == i => z.clone(),
                Estimate::Intermediate { layer, z } => net.eval_sub(layer + 1, i, z)?,
            };

            // A: move z_i within B_{r_i}(z_i).
            let a_ball = ball(z_i.clone(), phase.forward_radius);
            let s = settings(phase.forward_steps, config.intermediate_step_size, config.noise_stages.forward);
            let a = run_magnitude(i + 1, &z_i, &a_ball, &s, &mut audit, &mut recorder)?;
            let z_i_star = a.x_best;

            if !config.stages.back_projection {
                estimate = Estimate::Intermediate { layer: i, z: z_i_star };
            } else {
                // B: fit G_1^i(z) to z_i* inside B_{s_i}(0).
                let b_ball = ball(vec![0.0; net.latent_dim()], phase.backproj_radius);
                let b_start = project_l1(&latest_latent, &b_ball)?;
                let s = settings(phase.backproj_steps, config.backproj_step_size, config.noise_stages.back_projection);
                let b = pgd_observed(
                    |z| {
                        let (out, tr) = net.forward_sub(1, i, z).expect("validated dims");
                        let diff: Vec<f64> = out.iter().zip(&z_i_star).map(|(a, b)| a - b).collect();
                        let cot: Vec<f64> = diff.iter().map(|d| 2.0 * d).collect();
                        let grad = net.vjp_sub(1, i, &tr, &cot).expect("trace from forward_sub");
                        (norm_sq(&diff), grad)
                    },
                    &b_start,
                    &b_ball,
                    &s,
                    |_, z, _| {
                        audit.record(z, &b_ball);
                        if trace.record {
                            let image = objective.image_from(1, z);
                            recorder.push(trace, objective.raw_loss(&image), &image);
                        }
                    },
                )?;
                let z_bar = b.x_best;

                if config.stages.refinement {
                    // C: refine z_0 within B_{r_0}(z_bar).
                    let c_ball = ball(z_bar.clone(), phase.refine_radius);
                    let s = settings(phase.refine_steps, config.latent_step_size, config.noise_stages.refinement);
                    let c = run_magnitude(1, &z_bar, &c_ball, &s, &mut audit, &mut recorder)?;
                    latest_latent = c.x_best;
                } else {
                    latest_latent = z_bar;
                }
                estimate = Estimate::Latent(latest_latent.clone());
            }

            let image = image_of(&estimate);
            let loss = objective.raw_loss(&image);
            if loss < best.0 {
                best = (loss, image, latest_latent.clone());
            }
        }
    }

    let (magnitude_loss, image, z0_final) = best;
    Ok(ReconstructionResult {
        image,
        z0_final,
        magnitude_loss,
        loss_trace: recorder.losses,
        psnr_trace: recorder.psnrs,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        feasibility: audit,
        ..Default::default()
    })
}

/// Runs `solver(restart_index, restart_seed)` for every restart and keeps
/// the result with the lowest magnitude loss (lowest index on ties).
/// Restart seeds are `seed.derive(restart_index)`. The returned feasibility
/// audit covers every successful restart, not only the selected one.
pub fn run_with_restarts<F>(restarts: usize, seed: Seed, parallel: bool, solver: F) -> Result<ReconstructionResult>
where
    F: Fn(usize, Seed) -> Result<ReconstructionResult> + Sync,
{
    if restarts == 0 {
        return Err(Error::Config("need at least one restart".into()));
    }
    let run = |r: usize| solver(r, seed.derive(r as u64));
    let outcomes: Vec<Result<ReconstructionResult>> = if parallel {
        (0..restarts).into_par_iter().map(run).collect()
    } else {
        (0..restarts).map(run).collect()
    };
    let losses: Vec<f64> = outcomes
        .iter()
        .map(|o| o.as_ref().map_or(f64::NAN, |r| r.magnitude_loss))
        .collect();
    let mut best: Option<(usize, ReconstructionResult)> = None;
    let mut errors = Vec::new();
    let mut audit = FeasibilityAudit::default();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(result) => {
                audit.merge(&result.feasibility);
                if best.as_ref().is_none_or(|(_, b)| result.magnitude_loss < b.magnitude_loss) {
                    best = Some((r, result));
                }
            }
            Err(e) => errors.push(e),
        }
    }
    let (index, mut result) = best.ok_or(Error::AllRestartsFailed(errors))?;
    result.restart_index = index;
    result.restart_losses = losses;
    result.feasibility = audit;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{Activation, DenseLayer};
    use crate::math::standard_normal;

    fn small_net() -> GeneratorNet {
        let l1 = DenseLayer::new(6, 3, standard_normal(18, Seed(1)), standard_normal(6, Seed(2)), Activation::Relu).unwrap();
        let l2 = DenseLayer::new(8, 6, standard_normal(48, Seed(3)), standard_normal(8, Seed(4)), Activation::Relu).unwrap();
        let l3 =
            DenseLayer::new(16, 8, standard_normal(128, Seed(5)), standard_normal(16, Seed(6)), Activation::Sigmoid).unwrap();
        GeneratorNet::new(vec![l1, l2, l3]).unwrap()
    }

    fn config(phases: Vec<PriloPhase>) -> PriloConfig {
        PriloConfig {
            init_steps: 20,
            init_radius: 10.0,
            phases,
            latent_step_size: 0.5,
            intermediate_step_size: 0.5,
            backproj_step_size: 0.5,
            noise: NoiseSchedule::default(),
            noise_stages: StageFlags::ALL,
            stages: StageFlags::ALL,
        }
    }

    fn phase(layer: usize) -> PriloPhase {
        PriloPhase {
            target_layer: layer,
            repetitions: 2,
            forward_steps: 10,
            forward_radius: 1.0,
            backproj_steps: 10,
            backproj_radius: 5.0,
            refine_steps: 10,
            refine_radius: 2.0,
        }
    }

    #[test]
    fn er_iters_zero_clamps() {
        let shape = Shape2D::new(2, 2).unwrap();
        let y = Magnitudes::new(vec![1.0; 4]).unwrap();
        let r = er(&y, shape, 0, &[-0.5, 0.3, 1.7, 0.9]).unwrap();
        assert_eq!(r.image, vec![0.0, 0.3, 1.0, 0.9]);
    }

    #[test]
    fn er_constant_image_is_fixed_after_one_step() {
        let shape = Shape2D::new(4, 4).unwrap();
        let target = vec![0.4; 16];
        let y = MeasurementOperator::fourier(shape).apply_magnitude(&target).unwrap();
        let x0: Vec<f64> = standard_normal(16, Seed(3)).iter().map(|v| 0.5 + 0.1 * v).collect();
        let r = er(&y, shape, 1, &x0).unwrap();
        assert!(r.magnitude_loss <= 1e-10, "{}", r.magnitude_loss);
    }

    #[test]
    fn hio_without_feedback_matches_er_step() {
        let shape = Shape2D::new(4, 4).unwrap();
        // A positive image whose magnitude substitution stays inside [0, 1].
        let target: Vec<f64> = (0..16).map(|p| 0.3 + 0.02 * p as f64).collect();
        let y = MeasurementOperator::fourier(shape).apply_magnitude(&target).unwrap();
        let x0: Vec<f64> = target.iter().map(|v| v + 0.01).collect();
        let step = FourierMagnitudeStep { fft: Fft2::new(shape), y: y.as_slice() };
        let (_, sub) = step.substitute(&x0);
        assert!(sub.iter().all(|v| (0.0..=1.0).contains(v)));
        let h = hio_with(&y, shape, 1, 0.0, &x0, &ImageConstraint::default(), &TraceOptions::off()).unwrap();
        let e = er(&y, shape, 1, &x0).unwrap();
        for (a, b) in h.image.iter().zip(&e.image) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn er_substitution_matches_magnitudes() {
        let shape = Shape2D::new(5, 6).unwrap();
        let op = MeasurementOperator::fourier(shape);
        let y = op.apply_magnitude(&standard_normal(30, Seed(1)).iter().map(|v| v.abs()).collect::<Vec<_>>()).unwrap();
        let step = FourierMagnitudeStep { fft: Fft2::new(shape), y: y.as_slice() };
        let (_, sub) = step.substitute(&standard_normal(30, Seed(2)));
        // The substituted spectrum is Hermitian, so its inverse is real and
        // its magnitudes are y.
        let mags = op.apply_magnitude(&sub).unwrap();
        for (a, b) in mags.as_slice().iter().zip(y.as_slice()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn dpr_at_optimum_stays() {
        let net = small_net();
        let op = MeasurementOperator::fourier(Shape2D::new(4, 4).unwrap());
        let z_star = vec![0.2, -0.4, 0.9];
        let target = net.forward(&z_star).unwrap().0;
        let y = op.apply_magnitude(&target).unwrap();
        let settings = PgdSettings { steps: 10, step_size: 0.1, noise: NoiseSchedule::off(), seed: Seed(0) };
        let r = dpr_solve(&op, &y, &net, &z_star, &settings, f64::INFINITY, &TraceOptions::off()).unwrap();
        assert_eq!(r.magnitude_loss, 0.0);
        assert_eq!(r.image, target);
    }

    #[test]
    fn prilo_without_phases_returns_generator_output() {
        let net = small_net();
        let op = MeasurementOperator::fourier(Shape2D::new(4, 4).unwrap());
        let y = op.apply_magnitude(&net.forward(&[0.1, 0.1, 0.1]).unwrap().0).unwrap();
        let z0 = vec![1.0, -1.0, 0.5];
        let cfg = PriloConfig { init_steps: 0, ..config(vec![]) };
        let r = prilo_solve(&op, &y, &net, &z0, &cfg, Seed(1), &TraceOptions::off()).unwrap();
        assert_eq!(r.image, net.forward(&z0).unwrap().0);
        assert_eq!(r.z0_final, z0);
    }

    #[test]
    fn prilo_rejects_output_layer_and_backwards_schedule() {
        let net = small_net();
        let op = MeasurementOperator::fourier(Shape2D::new(4, 4).unwrap());
        let y = Magnitudes::new(vec![1.0; 16]).unwrap();
        let z0 = vec![0.0; 3];
        let err = prilo_solve(&op, &y, &net, &z0, &config(vec![phase(3)]), Seed(0), &TraceOptions::off());
        assert!(matches!(err, Err(Error::Config(_))));
        let err = prilo_solve(&op, &y, &net, &z0, &config(vec![phase(2), phase(1)]), Seed(0), &TraceOptions::off());
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn prilo_respects_every_ball() {
        let net = small_net();
        let op = MeasurementOperator::fourier(Shape2D::new(4, 4).unwrap());
        let y = op.apply_magnitude(&net.forward(&[0.5, -0.2, 0.3]).unwrap().0).unwrap();
        let r = prilo_solve(&op, &y, &net, &[0.0; 3], &config(vec![phase(1), phase(2)]), Seed(4), &TraceOptions::off())
            .unwrap();
        assert_eq!(r.feasibility.violations, 0);
        assert!(r.feasibility.checked > 0);
        assert!(r.feasibility.max_ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn prilo_trace_counts_every_iteration() {
        let net = small_net();
        let op = MeasurementOperator::fourier(Shape2D::new(4, 4).unwrap());
        let target = net.forward(&[0.5, -0.2, 0.3]).unwrap().0;
        let y = op.apply_magnitude(&target).unwrap();
        let trace = TraceOptions { record: true, reference: Some(target), shape: None, register: false };
        let cfg = config(vec![phase(1), phase(2)]);
        let r = prilo_solve(&op, &y, &net, &[0.0; 3], &cfg, Seed(4), &trace).unwrap();
        let per_rep = 10 + 10 + 10;
        assert_eq!(r.loss_trace.len(), 20 + 2 * 2 * per_rep);
        assert_eq!(r.psnr_trace.len(), r.loss_trace.len());
    }

    #[test]
    fn restart_selection() {
        let fake = |r: usize, _seed: Seed| -> Result<ReconstructionResult> {
            if r == 2 {
                return Err(Error::Config("boom".into()));
            }
            Ok(ReconstructionResult { magnitude_loss: [3.0, 1.0, 0.0, 1.0][r], ..Default::default() })
        };
        let best = run_with_restarts(4, Seed(0), false, fake).unwrap();
        assert_eq!(best.restart_index, 1);
        assert_eq!(best.restart_losses[..2], [3.0, 1.0]);
        assert!(best.restart_losses[2].is_nan());

        let failing = |_: usize, _: Seed| -> Result<ReconstructionResult> { Err(Error::Config("no".into())) };
        assert!(matches!(run_with_restarts(3, Seed(0), true, failing), Err(Error::AllRestartsFailed(_))));
    }
}
