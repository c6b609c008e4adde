use num_complex::Complex64;
use prilo::math::Fft2;
use prilo::metrics::{circular_shift, point_reflect};
use prilo::{dft2, idft2, MeasurementOperator, Shape2D};
use proptest::prelude::*;

fn image_strategy() -> impl Strategy<Value = (Shape2D, Vec<f64>)> {
    (1usize..9, 1usize..9).prop_flat_map(|(h, w)| {
        (Just(Shape2D::new(h, w).unwrap()), prop::collection::vec(-1.0f64..1.0, h * w))
    })
}

fn cmax(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn real_input_gives_conjugate_symmetric_spectrum((shape, x) in image_strategy()) {
        let c = dft2(&x, shape).unwrap();
        let (h, w) = (shape.height(), shape.width());
        for r in 0..h {
            for s in 0..w {
                let mirror = c[((h - r) % h) * w + (w - s) % w];
                prop_assert!((c[r * w + s] - mirror.conj()).norm() <= 1e-10);
            }
        }
    }

    #[test]
    fn parseval((shape, x) in image_strategy()) {
        let c = dft2(&x, shape).unwrap();
        let spatial: f64 = x.iter().map(|v| v * v).sum();
        let spectral: f64 = c.iter().map(|v| v.norm_sqr()).sum::<f64>() / shape.len() as f64;
        prop_assert!((spatial - spectral).abs() <= 1e-10 * (1.0 + spatial));
    }

    #[test]
    fn linearity((shape, x) in image_strategy(), a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let y = prilo::math::standard_normal(shape.len(), prilo::Seed(seed));
        let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let lhs = dft2(&combo, shape).unwrap();
        let cx = dft2(&x, shape).unwrap();
        let cy = dft2(&y, shape).unwrap();
        let rhs: Vec<Complex64> = cx.iter().zip(&cy).map(|(p, q)| p * a + q * b).collect();
        prop_assert!(cmax(&lhs, &rhs) <= 1e-10);
    }

    #[test]
    fn inverse_undoes_forward((shape, x) in image_strategy()) {
        let back = idft2(&dft2(&x, shape).unwrap(), shape).unwrap();
        for (b, v) in back.iter().zip(&x) {
            prop_assert!((b.re - v).abs() <= 1e-10 && b.im.abs() <= 1e-10);
        }
    }

    #[test]
    fn magnitudes_ignore_shift_and_flip((shape, x) in image_strategy(), dr in 0usize..9, dc in 0usize..9) {
        let op = MeasurementOperator::fourier(shape);
        let y = op.apply_magnitude(&x).unwrap();
        let shifted = circular_shift(&x, shape, dr % shape.height(), dc % shape.width());
        let flipped = point_reflect(&x, shape);
        for other in [shifted, flipped] {
            let z = op.apply_magnitude(&other).unwrap();
            let d = y.as_slice().iter().zip(z.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(d <= 1e-10);
        }
    }

    #[test]
    fn adjoint_identity((shape, x) in image_strategy(), seed in any::<u64>()) {
        // Re<Ax, v> = <x, A^H v> for real x.
        let op = MeasurementOperator::fourier(shape);
        let re = prilo::math::standard_normal(shape.len(), prilo::Seed(seed));
        let im = prilo::math::standard_normal(shape.len(), prilo::Seed(seed).derive(1));
        let v: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
        let ax = op.apply(&x).unwrap();
        let lhs: f64 = ax.iter().zip(&v).map(|(p, q)| (p * q.conj()).re).sum();
        let ahv = op.adjoint_real(&v).unwrap();
        let rhs: f64 = x.iter().zip(&ahv).map(|(p, q)| p * q).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }
}

#[test]
fn cached_plans_match_free_functions() {
    let shape = Shape2D::new(5, 7).unwrap();
    let x = prilo::math::standard_normal(35, prilo::Seed(4));
    let fft = Fft2::new(shape);
    assert!(cmax(&fft.forward_real(&x).unwrap(), &dft2(&x, shape).unwrap()) == 0.0);
}
