//! Shared fixtures for the integration tests and the acceptance suite.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use polq::model::{validate, ConstantModel, Dimensions, ModelSpec};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn uniform(rng: &mut StdRng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn uniform_vec(rng: &mut StdRng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(-1.0..1.0))
}

fn psd(rng: &mut StdRng, n: usize) -> DMatrix<f64> {
    let l = uniform(rng, n, n);
    let m = &l * l.transpose();
    (&m + m.transpose()) * 0.5
}

/// A random constant model that passes validation: stable `A`, well
/// conditioned `K`, `R` bounded below and `Q - SᵀR⁻¹S` positive
/// semidefinite. Dimensions go up to `n = 3, m = 2, d = 2, k = 2`.
pub fn random_model(seed: u64) -> ModelSpec {
    let mut rng = StdRng::seed_from_u64(seed);
    loop {
        let dims = Dimensions::new(
            rng.random_range(1..=3),
            rng.random_range(1..=2),
            rng.random_range(1..=2),
            rng.random_range(1..=2),
        )
        .unwrap();
        let Dimensions { n, m, d, k } = dims;
        let mut model = ConstantModel::zeros(dims);

        let a = uniform(&mut rng, n, n);
        let shift = a.norm() + 0.1;
        model.coeffs.dynamics = a - DMatrix::identity(n, n) * shift;
        model.coeffs.input = uniform(&mut rng, n, m);
        model.coeffs.drift = uniform_vec(&mut rng, n);
        model.coeffs.shared_noise = uniform(&mut rng, n, d) * 0.5;
        model.coeffs.state_noise = uniform(&mut rng, n, k);
        model.coeffs.observation = uniform(&mut rng, d, n);
        model.coeffs.observation_drift = uniform_vec(&mut rng, d);
        model.coeffs.observation_noise = DMatrix::identity(d, d) + uniform(&mut rng, d, d) * 0.3;

        let r = psd(&mut rng, m) + DMatrix::identity(m, m) * 0.5;
        let s = uniform(&mut rng, m, n) * 0.3;
        let r_inv = r.clone().try_inverse().unwrap();
        let q = psd(&mut rng, n) + s.transpose() * &r_inv * &s;
        model.cost.state = (&q + q.transpose()) * 0.5;
        model.cost.cross = s;
        model.cost.control = r;
        model.cost.state_linear = uniform_vec(&mut rng, n);
        model.cost.control_linear = uniform_vec(&mut rng, m);
        model.terminal = psd(&mut rng, n);
        model.terminal_linear = uniform_vec(&mut rng, n);
        model.x0 = uniform_vec(&mut rng, n);

        let horizon = rng.random_range(0.5..2.0);
        let Ok(spec) = model.build(horizon) else {
            continue;
        };
        if validate(&spec, &spec.tol).is_ok_and(|r| r.passed()) {
            return spec;
        }
    }
}

pub fn scalar_benchmark() -> ModelSpec {
    ConstantModel::scalar_benchmark().build(1.0).unwrap()
}

/// Path to one of the bundled scenario files.
pub fn scenario_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}
