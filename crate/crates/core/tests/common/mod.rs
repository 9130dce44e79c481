#![allow(dead_code)]

use lts_core::synthetic::generate_synthetic;
use lts_core::{standardize, Dataset, Design, InterceptMode, Method, ProblemSpec, StandardizedInstance};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform features and response on [-1, 1], standardized.
pub fn uniform_instance(m: usize, n: usize, seed: u64) -> StandardizedInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let y = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
    let names = (1..=n).map(|j| format!("x{j}")).collect();
    standardize(&Dataset::new(a, y, vec![false; m], names).unwrap()).unwrap()
}

/// Planted-outlier instance from the synthetic generator, standardized.
pub fn planted_instance(m: usize, n: usize, tau: f64, seed: u64) -> StandardizedInstance {
    let (data, _) = generate_synthetic(n, m, tau, seed).unwrap();
    standardize(&data).unwrap()
}

pub fn budget_for(m: usize, frac: f64) -> usize {
    (frac * m as f64 + 1e-9).floor() as usize
}

pub fn zero_design(inst: &StandardizedInstance, lambda: f64, budget: usize) -> Design {
    let spec = ProblemSpec::new(Method::Conic, lambda, budget).with_intercept(InterceptMode::Zero);
    Design::new(inst, &spec).unwrap()
}

/// Random SPD matrix `B'B + 0.1 I`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    b.transpose() * b + DMatrix::identity(n, n) * 0.1
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}
