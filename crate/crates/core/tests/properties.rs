mod common;

use common::{operator_system, OPERATOR_CONFIGS};
use pilr::assembly::assemble_t;
use pilr::basis::{make_basis, BasisSpec};
use pilr::datagen::{approximation_error, generate_solution, make_dataset, EquationSpec, SplitSizes};
use pilr::linalg::SparseMatrix;
use pilr::solvers::{fit_pilr_linear, fit_ridge, Penalty, RegressionProblem};
use pilr::trials::{make_trials, TrialSpec};
use pilr::variety::{beta_upper_bound, effective_dim_bound, DEFAULT_RANK_TOL};
use proptest::prelude::*;

fn oscillator_problem(d_t: usize, seed: u64) -> (RegressionProblem, SparseMatrix, pilr::assembly::TrialGram) {
    let basis = make_basis(&BasisSpec::Fourier1D {
        period: std::f64::consts::TAU,
        d_t,
        omit_fundamental: false,
    })
    .unwrap();
    let trials = make_trials(&TrialSpec::DiracUniform { count: 40, seed }, &basis).unwrap();
    let op = pilr::operators::Operator::HarmonicOscillator { spring: 1.0, mass: 1.0 };
    let d = pilr::assembly::assemble_d(op, &basis, &trials).unwrap();
    let t = assemble_t(&trials).unwrap();
    let eq = EquationSpec::HarmonicOscillator {
        spring: 1.0,
        mass: 1.0,
        period: std::f64::consts::TAU,
    };
    let gt = generate_solution(&eq, seed).unwrap();
    let sizes = SplitSizes { train: 8, val: 2, test: 2 };
    let data = make_dataset(&gt, sizes, 0.01, seed).unwrap();
    (RegressionProblem::from_samples(&basis, &data.train).unwrap(), d, t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn effective_dimension_shrinks_with_physics(
        d_t in 1usize..6,
        xi in 1e-6f64..1.0,
        nus in prop::collection::vec(1e-4f64..1e4, 2..5),
    ) {
        let (_, d, t) = oscillator_problem(d_t, 1);
        let dim = d.ncols() as f64;
        prop_assert_eq!(effective_dim_bound(&d, &t, xi, 0.0, DEFAULT_RANK_TOL).unwrap(), dim / (1.0 + xi));
        let mut nus = nus;
        nus.sort_by(f64::total_cmp);
        let mut prev = dim / (1.0 + xi);
        for nu in nus {
            let b = effective_dim_bound(&d, &t, xi, nu, DEFAULT_RANK_TOL).unwrap();
            prop_assert!(b <= prev * (1.0 + 1e-12));
            prop_assert!(b >= 2.0 / (1.0 + xi) - 1e-9);
            prev = b;
        }
    }

    #[test]
    fn closed_form_fit_solves_its_normal_equations(
        seed in 0u64..1000,
        xi in 1e-6f64..1e-1,
        nu in 0.0f64..1.0,
    ) {
        let (problem, d, t) = oscillator_problem(3, seed);
        let fit = fit_pilr_linear(&problem, &d, &t, Penalty::new(xi, nu).unwrap()).unwrap();
        // Phi^T (Phi w - y) + n (xi w + nu D^T D w) = 0 for Dirac trials.
        let phi = problem.design();
        let r: Vec<f64> = phi.mul_vec(&fit.w).iter().zip(problem.targets()).map(|(a, b)| a - b).collect();
        let g1 = phi.tr_mul_vec(&r);
        let g2 = d.tr_mul_vec(&d.mul_vec(&fit.w));
        let n = problem.n() as f64;
        let scale = 1.0 + g1.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for j in 0..fit.w.len() {
            let g = g1[j] + n * (xi * fit.w[j] + nu * g2[j]);
            prop_assert!(g.abs() <= 1e-8 * scale, "component {}: {:e}", j, g);
        }
    }

    #[test]
    fn physics_never_raises_the_residual(seed in 0u64..1000, xi in 1e-6f64..1e-2) {
        let (problem, d, t) = oscillator_problem(4, seed);
        let res = |nu: f64| fit_pilr_linear(&problem, &d, &t, Penalty::new(xi, nu).unwrap()).unwrap().residual_norm.unwrap();
        let ridge = fit_ridge(&problem, xi).unwrap();
        let base = d.mul_vec(&ridge.w).iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(res(1e-2) <= base * (1.0 + 1e-9) + 1e-12);
        prop_assert!(res(1.0) <= res(1e-2) * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn beta_bound_grows_with_dimension(rho in 1u32..5, d in 0u32..40) {
        let a = beta_upper_bound(rho, d).unwrap();
        let b = beta_upper_bound(rho, d + 1).unwrap();
        prop_assert!(b >= a);
        prop_assert_eq!(a, num_bigint::BigUint::from(rho) * num_bigint::BigUint::from(2 * rho - 1).pow(d + 1));
    }

    #[test]
    fn residual_is_linear_for_linear_operators(seed in 0u64..1000, a in -3.0f64..3.0) {
        use rand::{Rng, SeedableRng};
        for (_, toml) in OPERATOR_CONFIGS {
            let cs = operator_system(toml);
            if !cs.is_linear() {
                continue;
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let u: Vec<f64> = (0..cs.d()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..cs.d()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + y).collect();
            let (ru, rv, rm) = (cs.residual(&u).unwrap(), cs.residual(&v).unwrap(), cs.residual(&mix).unwrap());
            for k in 0..rm.len() {
                let want = a * ru[k] + rv[k];
                prop_assert!((rm[k] - want).abs() <= 1e-9 * (1.0 + want.abs()));
            }
        }
    }
}

#[test]
fn approximation_error_drops_as_the_basis_grows() {
    let eq = EquationSpec::HarmonicOscillator {
        spring: 4.0,
        mass: 1.0,
        period: std::f64::consts::TAU,
    };
    for seed in 0..5 {
        let gt = generate_solution(&eq, seed).unwrap();
        let mut prev = f64::INFINITY;
        for d_t in [1, 2, 3, 4] {
            let basis = make_basis(&BasisSpec::Fourier1D {
                period: std::f64::consts::TAU,
                d_t,
                omit_fundamental: false,
            })
            .unwrap();
            let e = approximation_error(&basis, &gt, 2048).unwrap();
            assert!(e <= prev + 1e-12, "seed {seed} d_t {d_t}: {e} > {prev}");
            prev = e;
        }
        assert!(prev < 1e-10);
    }
}
