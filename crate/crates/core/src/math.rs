//! Vector helpers, 2-D DFTs and seeded Gaussian sampling.
//!
//! The forward DFT is unnormalized and the inverse carries the `1/n` factor,
//! so `idft2(dft2(x)) == x` and Fourier magnitudes scale with `n`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Image geometry; pixels are stored row-major, `index = row * width + col`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape2D {
    height: usize,
    width: usize,
}

impl Shape2D {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "shape {height}x{width} must have positive sides"
            )));
        }
        Ok(Self { height, width })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub(crate) fn check(&self, len: usize, what: &str) -> Result<()> {
        if len != self.len() {
            return Err(Error::Shape(format!(
                "{what} has length {len}, shape {self} needs {}",
                self.len()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Shape2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

/// Root of all randomness. Generators are ChaCha8 streams seeded from the
/// value; independent sub-streams come from [`Seed::derive`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Seed(pub u64);

impl Seed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Child seed for stream `index` (restart number, image index, ...).
    pub fn derive(self, index: u64) -> Seed {
        Seed(splitmix64(self.0 ^ splitmix64(index.wrapping_add(0x9e37_79b9_7f4a_7c15))))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Cached row/column FFT plans for one image shape.
#[derive(Clone)]
pub struct Fft2 {
    shape: Shape2D,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2").field("shape", &self.shape).finish()
    }
}

impl Fft2 {
    pub fn new(shape: Shape2D) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            shape,
            row_fwd: planner.plan_fft_forward(shape.width),
            row_inv: planner.plan_fft_inverse(shape.width),
            col_fwd: planner.plan_fft_forward(shape.height),
            col_inv: planner.plan_fft_inverse(shape.height),
        }
    }

    pub fn shape(&self) -> Shape2D {
        self.shape
    }

    /// Unnormalized forward transform of a real image.
    pub fn forward_real(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        self.shape.check(x.len(), "image")?;
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, false);
        Ok(buf)
    }

    pub fn forward(&self, c: &[Complex64]) -> Result<Vec<Complex64>> {
        self.shape.check(c.len(), "spectrum")?;
        let mut buf = c.to_vec();
        self.transform(&mut buf, false);
        Ok(buf)
    }

    /// Inverse transform including the `1/n` factor.
    pub fn inverse(&self, c: &[Complex64]) -> Result<Vec<Complex64>> {
        self.shape.check(c.len(), "spectrum")?;
        let mut buf = c.to_vec();
        self.inverse_in_place(&mut buf);
        Ok(buf)
    }

    pub(crate) fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.transform(buf, false);
    }

    pub(crate) fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.transform(buf, true);
        let scale = 1.0 / self.shape.len() as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let (h, w) = (self.shape.height, self.shape.width);
        let (rows, cols) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        if w > 1 {
            rows.process(buf);
        }
        if h > 1 {
            let mut t = vec![Complex64::default(); buf.len()];
            transpose(buf, &mut t, h, w);
            cols.process(&mut t);
            transpose(&t, buf, w, h);
        }
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

/// Unnormalized forward 2-D DFT of a real image.
pub fn dft2(x: &[f64], shape: Shape2D) -> Result<Vec<Complex64>> {
    Fft2::new(shape).forward_real(x)
}

/// Inverse of [`dft2`] (scaled by `1/n`).
pub fn idft2(c: &[Complex64], shape: Shape2D) -> Result<Vec<Complex64>> {
    Fft2::new(shape).inverse(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GaussianKind {
    Real,
    Complex,
}

/// Dense row-major `m x n` matrix with Gaussian entries.
#[derive(Clone, Debug, PartialEq)]
pub enum GaussianMatrix {
    Real {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    },
    Complex {
        rows: usize,
        cols: usize,
        data: Vec<Complex64>,
    },
}

impl GaussianMatrix {
    pub fn rows(&self) -> usize {
        match self {
            Self::Real { rows, .. } | Self::Complex { rows, .. } => *rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Self::Real { cols, .. } | Self::Complex { cols, .. } => *cols,
        }
    }
}

/// Samples a measurement matrix. Real entries are N(0, 1/m); complex entries
/// have independent real and imaginary parts drawn from N(0, 1/(2m)), so that
/// `E|a|^2 = 1/m` for both kinds. Entries are drawn row-major from
/// `seed.rng()`, real part before imaginary part.
pub fn gaussian_matrix(m: usize, n: usize, kind: GaussianKind, seed: Seed) -> Result<GaussianMatrix> {
    if m == 0 || n == 0 {
        return Err(Error::Dimension(format!("matrix dimensions {m}x{n} must be positive")));
    }
    let mut rng = seed.rng();
    Ok(match kind {
        GaussianKind::Real => {
            let sd = (1.0 / m as f64).sqrt();
            let data = (0..m * n)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    sd * v
                })
                .collect::<Vec<f64>>();
            GaussianMatrix::Real { rows: m, cols: n, data }
        }
        GaussianKind::Complex => {
            let sd = (0.5 / m as f64).sqrt();
            let data = (0..m * n)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(sd * re, sd * im)
                })
                .collect();
            GaussianMatrix::Complex { rows: m, cols: n, data }
        }
    })
}

/// `count` standard-normal draws from the seed's stream.
pub fn standard_normal(count: usize, seed: Seed) -> Vec<f64> {
    let mut rng = seed.rng();
    (0..count).map(|_| StandardNormal.sample(&mut rng)).collect()
}
