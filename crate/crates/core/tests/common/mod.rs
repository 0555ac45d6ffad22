#![allow(dead_code)]

use drlq_core::{CostSpec, DisturbanceSamples, LtiSystem, Matrix, SampleStats};

/// `x' = 0.9x + u + w`, unit weights, `lambda = 10`, `alpha = 0.95`, atoms `{0.1, -0.1}`.
pub fn scalar() -> (LtiSystem, CostSpec, DisturbanceSamples) {
    let one = |v: f64| Matrix::from_element(1, 1, v);
    let sys = LtiSystem::new(one(0.9), one(1.0), one(1.0)).unwrap();
    let cost = CostSpec::new(one(1.0), one(1.0), 0.95, 10.0).unwrap();
    let samples = DisturbanceSamples::from_rows(&[vec![0.1], vec![-0.1]]).unwrap();
    (sys, cost, samples)
}

/// Scalar plant with a biased sample set, so offsets are nonzero.
pub fn scalar_biased() -> (LtiSystem, CostSpec, DisturbanceSamples) {
    let (sys, cost, _) = scalar();
    let samples = DisturbanceSamples::from_rows(&[vec![0.4], vec![0.1], vec![-0.2]]).unwrap();
    (sys, cost, samples)
}

pub fn quadrotor(lambda: f64) -> (LtiSystem, CostSpec, DisturbanceSamples) {
    let sys = LtiSystem::quadrotor(0.1);
    let cost = CostSpec::new(
        Matrix::identity(4, 4),
        Matrix::identity(2, 2) * 0.2,
        0.99,
        lambda,
    )
    .unwrap();
    (sys, cost, DisturbanceSamples::quadrotor_fixture())
}

pub fn stats(samples: &DisturbanceSamples) -> SampleStats {
    SampleStats::from_samples(samples)
}

pub fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}
