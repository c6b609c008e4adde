//! Reconstruction quality metrics and alignment under the Fourier trivial
//! ambiguities (circular shift, point reflection).

use crate::error::{Error, Result};
use crate::math::Shape2D;

fn check_pair(x: &[f64], reference: &[f64]) -> Result<()> {
    if x.len() != reference.len() {
        return Err(Error::Shape(format!(
            "image has length {}, reference has length {}",
            x.len(),
            reference.len()
        )));
    }
    Ok(())
}

pub fn mse(x: &[f64], reference: &[f64]) -> Result<f64> {
    check_pair(x, reference)?;
    Ok(x.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len().max(1) as f64)
}

/// `10 log10(peak^2 / mse)`; `f64::INFINITY` for an exact match.
pub fn psnr(x: &[f64], reference: &[f64], peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::Config(format!("PSNR peak must be positive, got {peak}")));
    }
    let err = mse(x, reference)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / err).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Half-sample symmetric index (`d c b a | a b c d | d c b a`).
fn reflect(i: isize, len: usize) -> usize {
    let len = len as isize;
    let period = 2 * len;
    let mut m = i.rem_euclid(period);
    if m >= len {
        m = period - 1 - m;
    }
    m as usize
}

fn blur(img: &[f64], shape: Shape2D, kernel: &[f64]) -> Vec<f64> {
    let (h, w) = (shape.height(), shape.width());
    let half = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            tmp[r * w + c] = kernel
                .iter()
                .enumerate()
                .map(|(t, k)| k * img[r * w + reflect(c as isize + t as isize - half, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = kernel
                .iter()
                .enumerate()
                .map(|(t, k)| k * tmp[reflect(r as isize + t as isize - half, h) * w + c])
                .sum();
        }
    }
    out
}

fn ssim_term(mx: f64, my: f64, vx: f64, vy: f64, cov: f64) -> f64 {
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1 and symmetric borders. Images smaller than the
/// window fall back to a single global window.
pub fn ssim(x: &[f64], reference: &[f64], shape: Shape2D) -> Result<f64> {
    check_pair(x, reference)?;
    shape.check(x.len(), "image")?;
    let n = x.len() as f64;
    if shape.height() < SSIM_WINDOW || shape.width() < SSIM_WINDOW {
        let mx = x.iter().sum::<f64>() / n;
        let my = reference.iter().sum::<f64>() / n;
        let vx = x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n;
        let vy = reference.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
        let cov = x.iter().zip(reference).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
        return Ok(ssim_term(mx, my, vx, vy, cov));
    }
    let kernel = gaussian_kernel();
    let mu_x = blur(x, shape, &kernel);
    let mu_y = blur(reference, shape, &kernel);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = reference.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(reference).map(|(a, b)| a * b).collect();
    let e_xx = blur(&xx, shape, &kernel);
    let e_yy = blur(&yy, shape, &kernel);
    let e_xy = blur(&xy, shape, &kernel);
    let total: f64 = (0..x.len())
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            ssim_term(mx, my, e_xx[i] - mx * mx, e_yy[i] - my * my, e_xy[i] - mx * my)
        })
        .sum();
    Ok(total / n)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Registration {
    pub aligned: Vec<f64>,
    /// Circular shift `(rows, cols)` applied after the optional reflection.
    pub shift: (usize, usize),
    pub flipped: bool,
}

/// `x[(H - j) mod H, (W - k) mod W]`.
pub fn point_reflect(x: &[f64], shape: Shape2D) -> Vec<f64> {
    let (h, w) = (shape.height(), shape.width());
    let mut out = vec![0.0; x.len()];
    for j in 0..h {
        for k in 0..w {
            out[j * w + k] = x[((h - j) % h) * w + (w - k) % w];
        }
    }
    out
}

/// Moves pixel `(j, k)` to `(j + dr, k + dc)` modulo the shape.
pub fn circular_shift(x: &[f64], shape: Shape2D, dr: usize, dc: usize) -> Vec<f64> {
    let (h, w) = (shape.height(), shape.width());
    let mut out = vec![0.0; x.len()];
    for j in 0..h {
        for k in 0..w {
            out[((j + dr) % h) * w + (k + dc) % w] = x[j * w + k];
        }
    }
    out
}

/// Picks the circular shift of `x` or of its point reflection with the
/// largest correlation against `reference`. Since these transforms keep
/// `||x||`, this is also the candidate with the lowest MSE. Ties keep the
/// earliest candidate, unflipped and unshifted first.
pub fn register_trivial(x: &[f64], reference: &[f64], shape: Shape2D) -> Result<Registration> {
    check_pair(x, reference)?;
    shape.check(x.len(), "image")?;
    let (h, w) = (shape.height(), shape.width());
    let mut best = (f64::NEG_INFINITY, (0, 0), false);
    let reflected = point_reflect(x, shape);
    for (flipped, candidate) in [(false, x), (true, reflected.as_slice())] {
        for dr in 0..h {
            for dc in 0..w {
                let mut corr = 0.0;
                for j in 0..h {
                    let src_row = (j + h - dr) % h;
                    for k in 0..w {
                        corr += candidate[src_row * w + (k + w - dc) % w] * reference[j * w + k];
                    }
                }
                if corr > best.0 {
                    best = (corr, (dr, dc), flipped);
                }
            }
        }
    }
    let (_, (dr, dc), flipped) = best;
    let source = if flipped { &reflected } else { x };
    Ok(Registration { aligned: circular_shift(source, shape, dr, dc), shift: (dr, dc), flipped })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub psnr_db_registered: f64,
    pub ssim_registered: f64,
    pub magnitude_mse: f64,
    /// Whether the registered metrics come from an actual alignment search.
    pub registered: bool,
    pub shift: (usize, usize),
    pub flipped: bool,
}

/// Raw metrics plus, when `register` is set, metrics after
/// [`register_trivial`]; otherwise the registered fields repeat the raw ones.
pub fn evaluate(
    x: &[f64],
    reference: &[f64],
    shape: Shape2D,
    magnitude_mse: f64,
    register: bool,
) -> Result<MetricReport> {
    let psnr_db = psnr(x, reference, 1.0)?;
    let ssim_raw = ssim(x, reference, shape)?;
    let (psnr_reg, ssim_reg, shift, flipped) = if register {
        let reg = register_trivial(x, reference, shape)?;
        (psnr(&reg.aligned, reference, 1.0)?, ssim(&reg.aligned, reference, shape)?, reg.shift, reg.flipped)
    } else {
        (psnr_db, ssim_raw, (0, 0), false)
    };
    Ok(MetricReport {
        psnr_db,
        ssim: ssim_raw,
        psnr_db_registered: psnr_reg,
        ssim_registered: ssim_reg,
        magnitude_mse,
        registered: register,
        shift,
        flipped,
    })
}

/// Sample Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    Ok(cov / (va * vb).sqrt())
}
