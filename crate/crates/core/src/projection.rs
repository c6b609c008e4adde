//! Euclidean projection onto l1-balls and projected gradient descent with
//! decaying gradient noise.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math::{l1_distance, Seed};

/// `{x : ||x - center||_1 <= radius}`. An infinite radius means no constraint.
#[derive(Clone, Debug, PartialEq)]
pub struct L1Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl L1Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Config(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn unbounded(center: Vec<f64>) -> Self {
        Self { center, radius: f64::INFINITY }
    }

    pub fn is_bounded(&self) -> bool {
        self.radius.is_finite()
    }

    /// Relative slack allowed by [`L1Ball::contains`].
    pub const SLACK: f64 = 1e-12;

    pub fn contains(&self, x: &[f64]) -> bool {
        !self.is_bounded() || l1_distance(x, &self.center) <= self.radius * (1.0 + Self::SLACK)
    }
}

/// Projects `v` onto `ball` by soft-thresholding `v - center` with the
/// threshold found from the sorted magnitudes.
pub fn project_l1(v: &[f64], ball: &L1Ball) -> Result<Vec<f64>> {
    if v.len() != ball.center.len() {
        return Err(Error::Shape(format!(
            "vector has length {}, ball center has length {}",
            v.len(),
            ball.center.len()
        )));
    }
    if !ball.is_bounded() {
        return Ok(v.to_vec());
    }
    let u: Vec<f64> = v.iter().zip(&ball.center).map(|(a, c)| a - c).collect();
    if u.iter().map(|x| x.abs()).sum::<f64>() <= ball.radius {
        return Ok(v.to_vec());
    }
    let theta = l1_threshold(&u, ball.radius);
    let mut out: Vec<f64> = u
        .iter()
        .zip(&ball.center)
        .map(|(x, c)| c + x.signum() * (x.abs() - theta).max(0.0))
        .collect();
    // Rounding in theta can leave the result a few ulps outside.
    let excess = l1_distance(&out, &ball.center);
    if excess > ball.radius {
        let shrink = ball.radius / excess;
        for (o, c) in out.iter_mut().zip(&ball.center) {
            *o = c + (*o - c) * shrink;
        }
    }
    Ok(out)
}

/// `theta >= 0` with `sum_i max(|u_i| - theta, 0) = radius`, assuming
/// `||u||_1 > radius`.
fn l1_threshold(u: &[f64], radius: f64) -> f64 {
    let mut mags: Vec<f64> = u.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - radius) / (j + 1) as f64;
        if m > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    theta.max(0.0)
}

/// Gradient noise variance `eta / (1 + k)^gamma` at iteration `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub eta: f64,
    pub gamma: f64,
    pub enabled: bool,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self { eta: 0.02, gamma: 0.55, enabled: true }
    }
}

impl NoiseSchedule {
    pub fn off() -> Self {
        Self { enabled: false, ..Self::default() }
    }

    pub fn variance(&self, k: usize) -> f64 {
        self.eta / (1.0 + k as f64).powf(self.gamma)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PgdSettings {
    pub steps: usize,
    pub step_size: f64,
    pub noise: NoiseSchedule,
    pub seed: Seed,
}

#[derive(Clone, Debug)]
pub struct PgdOutcome {
    pub x_best: Vec<f64>,
    pub loss_best: f64,
    /// Loss after each update; `steps` entries.
    pub trace: Vec<f64>,
    /// Iteration that produced `x_best`; `None` when it is the start point.
    pub best_iteration: Option<usize>,
}

/// Runs `settings.steps` updates `x <- P(x - step (grad f(x) + u_k))`,
/// `u_k ~ N(0, sigma_k^2 I)`, and returns the best iterate seen, `x0`
/// included. `observe` sees every iterate after projection together with
/// its loss.
pub fn pgd_observed<F, O>(
    mut objective: F,
    x0: &[f64],
    ball: &L1Ball,
    settings: &PgdSettings,
    mut observe: O,
) -> Result<PgdOutcome>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    O: FnMut(usize, &[f64], f64),
{
    if x0.len() != ball.center.len() {
        return Err(Error::Shape(format!(
            "start point has length {}, ball center has length {}",
            x0.len(),
            ball.center.len()
        )));
    }
    if !(settings.step_size > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {}", settings.step_size)));
    }
    let mut x = x0.to_vec();
    let (mut loss, mut grad) = objective(&x);
    if !loss.is_finite() {
        return Err(Error::Divergence { iteration: 0, context: "objective at start point".into() });
    }
    let mut best = (x.clone(), loss, None);
    let mut trace = Vec::with_capacity(settings.steps);
    let mut rng = settings.seed.rng();
    for k in 0..settings.steps {
        if settings.noise.enabled {
            let sd = settings.noise.variance(k).sqrt();
            for (xi, gi) in x.iter_mut().zip(&grad) {
                let u: f64 = StandardNormal.sample(&mut rng);
                *xi -= settings.step_size * (gi + sd * u);
            }
        } else {
            for (xi, gi) in x.iter_mut().zip(&grad) {
                *xi -= settings.step_size * gi;
            }
        }
        if ball.is_bounded() {
            x = project_l1(&x, ball)?;
        }
        (loss, grad) = objective(&x);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { iteration: k, context: format!("loss {loss}") });
        }
        observe(k, &x, loss);
        trace.push(loss);
        if loss < best.1 {
            best = (x.clone(), loss, Some(k));
        }
    }
    Ok(PgdOutcome { x_best: best.0, loss_best: best.1, trace, best_iteration: best.2 })
}

pub fn pgd<F>(objective: F, x0: &[f64], ball: &L1Ball, settings: &PgdSettings) -> Result<PgdOutcome>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    pgd_observed(objective, x0, ball, settings, |_, _, _| {})
}
