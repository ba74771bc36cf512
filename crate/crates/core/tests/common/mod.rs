#![allow(dead_code)]

use std::path::PathBuf;

use pilr::assembly::ConstraintSystem;
use pilr::basis::make_basis;
use pilr::bench::{BenchConfig, Cell};
use pilr::trials::make_trials;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

pub fn load(name: &str) -> BenchConfig {
    BenchConfig::load(&config_path(name)).unwrap()
}

pub fn cells(name: &str) -> Vec<Cell> {
    load(name).cells().unwrap()
}

pub fn system(cell: &Cell) -> ConstraintSystem {
    let basis = make_basis(&cell.basis).unwrap();
    let trials = make_trials(&cell.trials, &basis).unwrap();
    ConstraintSystem::new(cell.equation.operator(), basis, trials).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest relative gap between `J v` and a central difference of the
/// residual along `v`, over `points` random `(w, v)` pairs.
pub fn jacobian_fd_gap(cs: &ConstraintSystem, points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cs.d();
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let jv = cs.jacobian(&w).unwrap().mul_vec(&v);
        let h = 1e-6;
        let shift = |s: f64| -> Vec<f64> { w.iter().zip(&v).map(|(a, b)| a + s * b).collect() };
        let rp = cs.residual(&shift(h)).unwrap();
        let rm = cs.residual(&shift(-h)).unwrap();
        let diff: Vec<f64> = jv
            .iter()
            .zip(rp.iter().zip(&rm))
            .map(|(j, (p, m))| j - (p - m) / (2.0 * h))
            .collect();
        worst = worst.max(norm(&diff) / norm(&jv).max(1e-8));
    }
    worst
}

/// Operator configurations covering every operator kind, sized for speed.
pub const OPERATOR_CONFIGS: &[(&str, &str)] = &[
    (
        "oscillator",
        r#"
experiment = "op-oscillator"
[equation]
kind = "harmonic-oscillator"
spring = 2.0
mass = 0.5
[basis]
d_t = 8
[trials]
kind = "dirac-uniform"
count = 60
[data]
n = 10
"#,
    ),
    (
        "diffusion",
        r#"
experiment = "op-diffusion"
[equation]
kind = "diffusion"
c = 0.7
[basis]
d_t = 3
d_x = 4
[trials]
kind = "dirac-uniform"
count = 80
[data]
n = 10
"#,
    ),
    (
        "bernoulli-linear",
        r#"
experiment = "op-bernoulli-linear"
[equation]
kind = "bernoulli"
p = 1.0
q = 0.0
rho = 0
h = 0.05
[trials]
kind = "grid-nodes"
[data]
n = 10
"#,
    ),
    (
        "bernoulli-nonlinear",
        r#"
experiment = "op-bernoulli-nonlinear"
[equation]
kind = "bernoulli"
p = 1.0
q = 0.5
rho = 3
h = 0.05
[trials]
kind = "grid-nodes"
[data]
n = 10
"#,
    ),
    (
        "fdm-linear",
        r#"
experiment = "op-fdm-linear"
[equation]
kind = "fdm-diffusion"
c = 1.0
h_t = 0.01
h_x = 0.2
horizon = 0.2
[trials]
kind = "grid-nodes"
[data]
n = 10
"#,
    ),
    (
        "fdm-saturating",
        r#"
experiment = "op-fdm-saturating"
[equation]
kind = "fdm-diffusion"
c = 0.1
saturating = true
h_t = 0.01
h_x = 0.2
horizon = 0.2
[trials]
kind = "grid-nodes"
[data]
n = 10
"#,
    ),
];

pub fn operator_system(toml: &str) -> ConstraintSystem {
    let cfg = BenchConfig::from_toml(toml).unwrap();
    system(&cfg.cells().unwrap()[0])
}
