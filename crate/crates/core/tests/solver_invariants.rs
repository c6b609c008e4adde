mod common;

use common::{random_net, uniform};
use prilo::math::standard_normal;
use prilo::solvers::{er_with, hio_with, ImageConstraint};
use prilo::{
    dpr_solve, er, prilo_solve, run_with_restarts, Activation, GeneratorNet, MeasurementOperator, NoiseSchedule,
    PgdSettings, PriloConfig, PriloPhase, Seed, Shape2D, StageFlags, TraceOptions,
};

fn planted_net() -> GeneratorNet {
    random_net(&[4, 12, 16, 36], &[Activation::Relu, Activation::Relu, Activation::Sigmoid], Seed(77))
}

fn config(noise: NoiseSchedule) -> PriloConfig {
    PriloConfig {
        init_steps: 40,
        init_radius: 10.0,
        phases: vec![
            PriloPhase {
                target_layer: 1,
                repetitions: 2,
                forward_steps: 30,
                forward_radius: 2.0,
                backproj_steps: 40,
                backproj_radius: 10.0,
                refine_steps: 30,
                refine_radius: 5.0,
            },
            PriloPhase {
                target_layer: 2,
                repetitions: 2,
                forward_steps: 30,
                forward_radius: 2.0,
                backproj_steps: 40,
                backproj_radius: 10.0,
                refine_steps: 30,
                refine_radius: 5.0,
            },
        ],
        latent_step_size: 0.05,
        intermediate_step_size: 0.05,
        backproj_step_size: 0.02,
        noise,
        noise_stages: StageFlags::ALL,
        stages: StageFlags::ALL,
    }
}

#[test]
fn er_loss_is_non_increasing() {
    let shape = Shape2D::new(6, 6).unwrap();
    let target = uniform(36, 0.0, 1.0, Seed(1));
    let y = MeasurementOperator::fourier(shape).apply_magnitude(&target).unwrap();
    let trace = TraceOptions { record: true, ..TraceOptions::off() };
    for start in 0..20 {
        let x0 = uniform(36, 0.0, 1.0, Seed(100 + start));
        let r = er_with(&y, shape, 60, &x0, &ImageConstraint::default(), &trace).unwrap();
        for w in r.loss_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "start {start}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn er_loss_matches_reported_image() {
    let shape = Shape2D::new(5, 4).unwrap();
    let op = MeasurementOperator::fourier(shape);
    let y = op.apply_magnitude(&uniform(20, 0.0, 1.0, Seed(3))).unwrap();
    let r = er(&y, shape, 15, &uniform(20, 0.0, 1.0, Seed(4))).unwrap();
    assert!((r.magnitude_loss - op.magnitude_loss(&r.image, &y).unwrap()).abs() <= 1e-9);
}

#[test]
fn hio_returns_its_lowest_loss_iterate() {
    let shape = Shape2D::new(8, 8).unwrap();
    let op = MeasurementOperator::fourier(shape);
    let mut target = vec![0.0; 64];
    for (i, v) in uniform(16, 0.0, 1.0, Seed(5)).into_iter().enumerate() {
        target[(i / 4) * 8 + i % 4] = v.round();
    }
    let y = op.apply_magnitude(&target).unwrap();
    let constraint = ImageConstraint::with_support_box(shape, 4, 4);
    let trace = TraceOptions { record: true, ..TraceOptions::off() };
    let r = hio_with(&y, shape, 200, 0.9, &uniform(64, 0.0, 1.0, Seed(6)), &constraint, &trace).unwrap();
    let min = r.loss_trace.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(r.magnitude_loss <= min + 1e-9);
    assert!((r.magnitude_loss - op.magnitude_loss(&r.image, &y).unwrap()).abs() <= 1e-9);
    assert!(r.image.iter().enumerate().all(|(p, v)| (p % 8 < 4 && p / 8 < 4) || *v == 0.0));
}

#[test]
fn dpr_never_exceeds_initial_loss() {
    let net = planted_net();
    let shape = Shape2D::new(6, 6).unwrap();
    let op = MeasurementOperator::fourier(shape);
    for t in 0..10 {
        let target = net.forward(&standard_normal(4, Seed(t)).to_vec()).unwrap().0;
        let y = op.apply_magnitude(&target).unwrap();
        let z0 = standard_normal(4, Seed(50 + t));
        let init = op.magnitude_loss(&net.forward(&z0).unwrap().0, &y).unwrap();
        let settings = PgdSettings { steps: 50, step_size: 0.5, noise: NoiseSchedule::default(), seed: Seed(t) };
        let r = dpr_solve(&op, &y, &net, &z0, &settings, f64::INFINITY, &TraceOptions::off()).unwrap();
        assert!(r.magnitude_loss <= init);
    }
}

#[test]
fn prilo_degenerates_to_dpr() {
    let net = planted_net();
    let shape = Shape2D::new(6, 6).unwrap();
    let op = MeasurementOperator::fourier(shape);
    let target = net.forward(&standard_normal(4, Seed(1))).unwrap().0;
    let y = op.apply_magnitude(&target).unwrap();
    let z0 = standard_normal(4, Seed(2));
    let seed = Seed(11);
    let settings = PgdSettings { steps: 60, step_size: 0.3, noise: NoiseSchedule::default(), seed };
    let trace = TraceOptions { record: true, ..TraceOptions::off() };
    let dpr = dpr_solve(&op, &y, &net, &z0, &settings, f64::INFINITY, &trace).unwrap();
    let cfg = PriloConfig {
        init_steps: 60,
        init_radius: f64::INFINITY,
        phases: vec![PriloPhase {
            target_layer: 2,
            repetitions: 1,
            forward_steps: 0,
            forward_radius: f64::INFINITY,
            backproj_steps: 0,
            backproj_radius: f64::INFINITY,
            refine_steps: 0,
            refine_radius: f64::INFINITY,
        }],
        latent_step_size: 0.3,
        ..config(NoiseSchedule::default())
    };
    let p = prilo_solve(&op, &y, &net, &z0, &cfg, seed, &trace).unwrap();
    assert_eq!(p.image, dpr.image);
    assert_eq!(p.z0_final, dpr.z0_final);
    assert_eq!(p.loss_trace, dpr.loss_trace);
}

#[test]
fn prilo_never_worse_than_its_initial_optimization() {
    let net = planted_net();
    let shape = Shape2D::new(6, 6).unwrap();
    let op = MeasurementOperator::fourier(shape);
    for t in 0..20 {
        let target = net.forward(&standard_normal(4, Seed(200 + t))).unwrap().0;
        let y = op.apply_magnitude(&target).unwrap();
        let z0 = standard_normal(4, Seed(300 + t));
        let cfg = config(NoiseSchedule::default());
        let init_only = PriloConfig { phases: vec![], ..cfg.clone() };
        let a = prilo_solve(&op, &y, &net, &z0, &init_only, Seed(t), &TraceOptions::off()).unwrap();
        let b = prilo_solve(&op, &y, &net, &z0, &cfg, Seed(t), &TraceOptions::off()).unwrap();
        assert!(b.magnitude_loss <= a.magnitude_loss, "trial {t}");
        assert_eq!(b.feasibility.violations, 0);
        assert!(b.feasibility.checked > 0);
    }
}

#[test]
fn prilo_reported_loss_matches_image() {
    let net = planted_net();
    let op = MeasurementOperator::gaussian(30, 36, prilo::GaussianKind::Complex, Seed(4)).unwrap();
    let target = net.forward(&standard_normal(4, Seed(9))).unwrap().0;
    let y = op.apply_magnitude(&target).unwrap();
    let r = prilo_solve(&op, &y, &net, &standard_normal(4, Seed(10)), &config(NoiseSchedule::off()), Seed(0), &TraceOptions::off())
        .unwrap();
    assert!((r.magnitude_loss - op.magnitude_loss(&r.image, &y).unwrap()).abs() <= 1e-9 * (1.0 + r.magnitude_loss));
    assert!(r.image.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn restarts_pick_the_minimum_of_individual_runs() {
    let net = planted_net();
    let op = MeasurementOperator::gaussian(36, 36, prilo::GaussianKind::Complex, Seed(5)).unwrap();
    let target = net.forward(&standard_normal(4, Seed(12))).unwrap().0;
    let y = op.apply_magnitude(&target).unwrap();
    let solve = |_: usize, s: Seed| {
        let z0 = standard_normal(4, s);
        let settings = PgdSettings { steps: 30, step_size: 0.3, noise: NoiseSchedule::default(), seed: s };
        dpr_solve(&op, &y, &net, &z0, &settings, f64::INFINITY, &TraceOptions::off())
    };
    let best = run_with_restarts(5, Seed(99), true, solve).unwrap();
    let individual: Vec<f64> = (0..5).map(|r| solve(r, Seed(99).derive(r as u64)).unwrap().magnitude_loss).collect();
    assert_eq!(best.restart_losses, individual);
    let min = individual.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(best.magnitude_loss, min);
    assert_eq!(individual[best.restart_index], min);
    let sequential = run_with_restarts(5, Seed(99), false, solve).unwrap();
    assert_eq!(sequential.image, best.image);
}

#[test]
fn planted_gaussian_target_is_recovered() {
    let net = planted_net();
    let op = MeasurementOperator::gaussian(36, 36, prilo::GaussianKind::Complex, Seed(6)).unwrap();
    let target = net.forward(&standard_normal(4, Seed(13))).unwrap().0;
    let y = op.apply_magnitude(&target).unwrap();
    let best = run_with_restarts(10, Seed(1), false, |_, s| {
        let settings = PgdSettings { steps: 400, step_size: 0.3, noise: NoiseSchedule::default(), seed: s };
        dpr_solve(&op, &y, &net, &standard_normal(4, s.derive(9)), &settings, f64::INFINITY, &TraceOptions::off())
    })
    .unwrap();
    let p = prilo::psnr(&best.image, &target, 1.0).unwrap();
    assert!(p >= 30.0, "psnr {p}");
}
