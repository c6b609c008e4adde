//! Magnitude-only forward operators `x -> |Ax|` and the least-squares
//! magnitude loss with its gradient.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::math::{gaussian_matrix, Fft2, GaussianKind, GaussianMatrix, Seed, Shape2D};

/// Phase factors `c/|c|` are treated as zero below this modulus.
pub const DEFAULT_PHASE_EPS: f64 = 1e-12;

/// Nonnegative measurement vector `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct Magnitudes(Vec<f64>);

impl Magnitudes {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Data(format!(
                "magnitude {i} is {}, expected a finite nonnegative value",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Clone, Debug)]
pub enum MeasurementOperator {
    /// Non-oversampled 2-D DFT; `m = n`.
    Fourier2D(Fft2),
    /// Dense real matrix, row-major.
    GaussianReal {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    },
    /// Dense complex matrix, row-major.
    GaussianComplex {
        rows: usize,
        cols: usize,
        data: Vec<Complex64>,
    },
}

impl MeasurementOperator {
    pub fn fourier(shape: Shape2D) -> Self {
        Self::Fourier2D(Fft2::new(shape))
    }

    pub fn gaussian(m: usize, n: usize, kind: GaussianKind, seed: Seed) -> Result<Self> {
        Ok(gaussian_matrix(m, n, kind, seed)?.into())
    }

    /// Wraps an explicit real matrix (row-major, `rows x cols`).
    pub fn from_real_matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries cannot form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self::GaussianReal { rows, cols, data })
    }

    pub fn input_len(&self) -> usize {
        match self {
            Self::Fourier2D(fft) => fft.shape().len(),
            Self::GaussianReal { cols, .. } | Self::GaussianComplex { cols, .. } => *cols,
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            Self::Fourier2D(fft) => fft.shape().len(),
            Self::GaussianReal { rows, .. } | Self::GaussianComplex { rows, .. } => *rows,
        }
    }

    /// Mean squared column norm `||A||_F^2 / n`: `n` for the unnormalized
    /// DFT and about 1 for the Gaussian ensembles, so `loss / energy_gain`
    /// is on the scale of a pixel-domain squared error.
    pub fn energy_gain(&self) -> f64 {
        match self {
            Self::Fourier2D(fft) => fft.shape().len() as f64,
            Self::GaussianReal { data, cols, .. } => data.iter().map(|a| a * a).sum::<f64>() / *cols as f64,
            Self::GaussianComplex { data, cols, .. } => data.iter().map(|a| a.norm_sqr()).sum::<f64>() / *cols as f64,
        }
    }

    pub fn is_fourier(&self) -> bool {
        matches!(self, Self::Fourier2D(_))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::Shape(format!(
                "operator expects input length {}, got {}",
                self.input_len(),
                x.len()
            )));
        }
        Ok(())
    }

    fn check_output(&self, len: usize) -> Result<()> {
        if len != self.output_len() {
            return Err(Error::Shape(format!(
                "operator produces {} measurements, got {len}",
                self.output_len()
            )));
        }
        Ok(())
    }

    /// `Ax` for a real input.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        self.check_input(x)?;
        Ok(match self {
            Self::Fourier2D(fft) => fft.forward_real(x)?,
            Self::GaussianReal { data, cols, .. } => data
                .chunks_exact(*cols)
                .map(|row| Complex64::new(row.iter().zip(x).map(|(a, b)| a * b).sum(), 0.0))
                .collect(),
            Self::GaussianComplex { data, cols, .. } => data
                .chunks_exact(*cols)
                .map(|row| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (a, b) in row.iter().zip(x) {
                        re += a.re * b;
                        im += a.im * b;
                    }
                    Complex64::new(re, im)
                })
                .collect(),
        })
    }

    /// `Re(A^H v)`; inputs are real throughout, so only the real part is kept.
    pub fn adjoint_real(&self, v: &[Complex64]) -> Result<Vec<f64>> {
        self.check_output(v.len())?;
        Ok(match self {
            Self::Fourier2D(fft) => {
                let n = fft.shape().len() as f64;
                let mut buf = v.to_vec();
                fft.inverse_in_place(&mut buf);
                buf.iter().map(|c| n * c.re).collect()
            }
            Self::GaussianReal { data, cols, .. } => {
                let mut out = vec![0.0; *cols];
                for (row, vj) in data.chunks_exact(*cols).zip(v) {
                    for (o, a) in out.iter_mut().zip(row) {
                        *o += a * vj.re;
                    }
                }
                out
            }
            Self::GaussianComplex { data, cols, .. } => {
                let mut out = vec![0.0; *cols];
                for (row, vj) in data.chunks_exact(*cols).zip(v) {
                    for (o, a) in out.iter_mut().zip(row) {
                        *o += a.re * vj.re + a.im * vj.im;
                    }
                }
                out
            }
        })
    }

    pub fn apply_magnitude(&self, x: &[f64]) -> Result<Magnitudes> {
        Ok(Magnitudes(self.apply(x)?.iter().map(|c| c.norm()).collect()))
    }

    /// `sum_j (|Ax|_j - y_j)^2`.
    pub fn magnitude_loss(&self, x: &[f64], y: &Magnitudes) -> Result<f64> {
        self.check_output(y.len())?;
        let ax = self.apply(x)?;
        Ok(ax.iter().zip(y.as_slice()).map(|(c, t)| (c.norm() - t).powi(2)).sum())
    }

    /// Gradient `2 Re(A^H((|c| - y) * c/|c|))` with `c = Ax`; the phase factor
    /// is zero where `|c| < eps`.
    pub fn magnitude_loss_grad(&self, x: &[f64], y: &Magnitudes, eps: f64) -> Result<Vec<f64>> {
        Ok(self.loss_and_grad(x, y, eps)?.1)
    }

    /// Loss and gradient from a single application of `A`.
    pub fn loss_and_grad(&self, x: &[f64], y: &Magnitudes, eps: f64) -> Result<(f64, Vec<f64>)> {
        self.check_output(y.len())?;
        let mut c = self.apply(x)?;
        let mut loss = 0.0;
        for (cj, &yj) in c.iter_mut().zip(y.as_slice()) {
            let modulus = cj.norm();
            let residual = modulus - yj;
            loss += residual * residual;
            *cj = if modulus < eps {
                Complex64::default()
            } else {
                *cj * (2.0 * residual / modulus)
            };
        }
        Ok((loss, self.adjoint_real(&c)?))
    }
}

impl From<GaussianMatrix> for MeasurementOperator {
    fn from(matrix: GaussianMatrix) -> Self {
        match matrix {
            GaussianMatrix::Real { rows, cols, data } => Self::GaussianReal { rows, cols, data },
            GaussianMatrix::Complex { rows, cols, data } => Self::GaussianComplex { rows, cols, data },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::standard_normal;

    fn shift(x: &[f64], shape: Shape2D, dr: usize, dc: usize) -> Vec<f64> {
        let (h, w) = (shape.height(), shape.width());
        let mut out = vec![0.0; x.len()];
        for r in 0..h {
            for c in 0..w {
                out[((r + dr) % h) * w + (c + dc) % w] = x[r * w + c];
            }
        }
        out
    }

    #[test]
    fn fourier_delta_has_unit_magnitudes() {
        let op = MeasurementOperator::fourier(Shape2D::new(1, 4).unwrap());
        let y = op.apply_magnitude(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(y.as_slice().len(), 4);
        assert!(y.as_slice().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn identity_matrix_gives_absolute_values() {
        let op = MeasurementOperator::from_real_matrix(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let y = op.apply_magnitude(&[-1.5, 0.0, 2.0]).unwrap();
        assert_eq!(y.as_slice(), &[1.5, 0.0, 2.0]);
    }

    #[test]
    fn fourier_magnitudes_ignore_circular_shift() {
        let shape = Shape2D::new(8, 8).unwrap();
        let op = MeasurementOperator::fourier(shape);
        let x = standard_normal(64, Seed(3));
        let a = op.apply_magnitude(&x).unwrap();
        let b = op.apply_magnitude(&shift(&x, shape, 3, 5)).unwrap();
        for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((p - q).abs() <= 1e-10);
        }
    }

    #[test]
    fn loss_cases() {
        let op = MeasurementOperator::fourier(Shape2D::new(1, 4).unwrap());
        let x = [1.0, 0.0, 0.0, 0.0];
        let y = op.apply_magnitude(&x).unwrap();
        assert_eq!(op.magnitude_loss(&x, &y).unwrap(), 0.0);
        let zeros = Magnitudes::new(vec![0.0; 4]).unwrap();
        assert!((op.magnitude_loss(&x, &zeros).unwrap() - 4.0).abs() < 1e-12);
        assert!(op.magnitude_loss(&x, &Magnitudes::new(vec![0.0; 3]).unwrap()).is_err());
    }

    #[test]
    fn loss_matches_per_entry_sum() {
        let op = MeasurementOperator::gaussian(20, 12, GaussianKind::Complex, Seed(9)).unwrap();
        let x = standard_normal(12, Seed(10));
        let y = Magnitudes::new(standard_normal(20, Seed(11)).iter().map(|v| v.abs()).collect()).unwrap();
        let GaussianMatrix::Complex { data, .. } = gaussian_matrix(20, 12, GaussianKind::Complex, Seed(9)).unwrap() else {
            unreachable!()
        };
        let mut oracle = 0.0;
        for j in 0..20 {
            let (mut re, mut im) = (0.0, 0.0);
            for k in 0..12 {
                re += data[j * 12 + k].re * x[k];
                im += data[j * 12 + k].im * x[k];
            }
            oracle += ((re * re + im * im).sqrt() - y.as_slice()[j]).powi(2);
        }
        assert!((op.magnitude_loss(&x, &y).unwrap() - oracle).abs() <= 1e-12 * oracle.max(1.0));
    }

    #[test]
    fn scalar_gradient() {
        let op = MeasurementOperator::from_real_matrix(1, 1, vec![2.0]).unwrap();
        let y = Magnitudes::new(vec![1.0]).unwrap();
        let g = op.magnitude_loss_grad(&[3.0], &y, DEFAULT_PHASE_EPS).unwrap();
        assert!((g[0] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_vanishes_at_exact_fit() {
        let op = MeasurementOperator::fourier(Shape2D::new(4, 4).unwrap());
        let x = standard_normal(16, Seed(1));
        let y = op.apply_magnitude(&x).unwrap();
        let g = op.magnitude_loss_grad(&x, &y, DEFAULT_PHASE_EPS).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn zero_modulus_uses_zero_phase() {
        let op = MeasurementOperator::from_real_matrix(1, 1, vec![1.0]).unwrap();
        let y = Magnitudes::new(vec![1.0]).unwrap();
        let g = op.magnitude_loss_grad(&[0.0], &y, DEFAULT_PHASE_EPS).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn rejects_negative_magnitudes() {
        assert!(Magnitudes::new(vec![1.0, -0.5]).is_err());
        assert!(Magnitudes::new(vec![f64::NAN]).is_err());
    }
}
