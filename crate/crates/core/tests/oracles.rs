mod common;

use common::{cells, jacobian_fd_gap, operator_system, system, OPERATOR_CONFIGS};
use pilr::assembly::assemble_t;
use pilr::datagen::{generate_solution, make_dataset};
use pilr::solvers::{fit_pilr_linear, fit_ridge, Penalty, RegressionProblem};
use pilr::variety::{dim_linear, dim_sampled, sample_variety_points, DEFAULT_RANK_TOL};

#[test]
fn jacobian_matches_central_differences() {
    for (i, (name, toml)) in OPERATOR_CONFIGS.iter().enumerate() {
        let cs = operator_system(toml);
        let gap = jacobian_fd_gap(&cs, 50, 100 + i as u64);
        assert!(gap < 1e-5, "{name}: relative gap {gap:e}");
    }
}

#[test]
fn sampled_dimension_agrees_with_rank_nullity() {
    let linear = [
        ("oscillator-strong.toml", 2),
        ("oscillator-weak.toml", 2),
        ("bernoulli-linear.toml", 1),
        ("fdm-linear.toml", 10),
    ];
    for (name, expect_dv) in linear {
        let cell = &cells(name)[0];
        let cs = system(cell);
        let d = cs.matrix().expect("linear benchmark");
        let rn = dim_linear(d, DEFAULT_RANK_TOL).unwrap();
        let pts = sample_variety_points(&cell.equation, &cs, 10, 7).unwrap();
        let sj = dim_sampled(&cs, &pts, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(rn.d_v, sj.d_v, "{name}");
        assert_eq!(rn.d_v, expect_dv, "{name}");
    }
}

#[test]
fn unpenalized_physics_reduces_to_ridge() {
    for name in ["bernoulli-linear.toml", "oscillator-strong.toml"] {
        let cell = &cells(name)[0];
        let cs = system(cell);
        let t = assemble_t(cs.trials()).unwrap();
        let gt = generate_solution(&cell.equation, 3).unwrap();
        let data = make_dataset(&gt, cell.sizes, 0.01, 4).unwrap();
        let problem = RegressionProblem::from_samples(cs.basis(), &data.train).unwrap();
        for xi in [1e-6, 1e-3, 0.5] {
            let rr = fit_ridge(&problem, xi).unwrap();
            let pi = fit_pilr_linear(&problem, cs.matrix().unwrap(), &t, Penalty::new(xi, 0.0).unwrap()).unwrap();
            let gap = rr.w.iter().zip(&pi.w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(gap <= 1e-12, "{name} xi={xi}: {gap:e}");
        }
    }
}
