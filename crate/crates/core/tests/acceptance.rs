//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any fails. Pass criterion numbers to run a subset:
//! `cargo test --release --test acceptance -- 2 5`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{cells, jacobian_fd_gap, load, operator_system, system, OPERATOR_CONFIGS};
use pilr::assembly::assemble_t;
use pilr::bench::{approximation_errors, run_experiment, BenchConfig, CellContext, ExperimentResult, Method, RunOptions};
use pilr::datagen::{generate_solution, make_dataset};
use pilr::solvers::{fit_pilr_linear, fit_ridge, Penalty, RegressionProblem};
use pilr::variety::{dim_linear, dim_sampled, dim_variety, effective_dim_bound, sample_variety_points, DEFAULT_RANK_TOL};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn run(cfg: &BenchConfig) -> ExperimentResult {
    let res = run_experiment(cfg, &RunOptions::default()).unwrap();
    for f in &res.failures {
        eprintln!("  [{}] cell {} seed {} failed: {}", cfg.experiment, f.cell, f.seed, f.error);
    }
    res
}

fn means(res: &ExperimentResult, method: Method) -> Vec<f64> {
    res.means(method).iter().map(|r| r.mse_test).collect()
}

fn criterion_1() -> Verdict {
    let mut bad = Vec::new();
    let mut checked = 0;
    let mut check = |name: &str, got: usize, want: usize| {
        checked += 1;
        if got != want {
            bad.push(format!("{name}: d_V={got} want {want}"));
        }
    };
    for cell in cells("oscillator-strong.toml").iter().filter(|c| c.n == 20) {
        let ctx = CellContext::build(cell, 0).unwrap();
        check(&format!("oscillator d={}", ctx.basis.d()), ctx.dim.d_v, 2);
    }
    for cell in cells("diffusion-strong.toml").iter().filter(|c| c.n == 20) {
        let ctx = CellContext::build(cell, 0).unwrap();
        let (d_x, d_t) = match cell.basis {
            pilr::basis::BasisSpec::DiffusionTensor { d_x, d_t, .. } => (d_x, d_t),
            _ => unreachable!(),
        };
        check(&format!("diffusion d={}", ctx.basis.d()), ctx.dim.d_v, 2 * d_x.min(d_t) + 1);
    }
    for name in ["bernoulli-linear.toml", "bernoulli-nonlinear.toml"] {
        for cell in cells(name) {
            let ctx = CellContext::build(&cell, 0).unwrap();
            check(&format!("{name} d={}", ctx.basis.d()), ctx.dim.d_v, 1);
        }
    }
    for name in ["fdm-linear.toml", "fdm-nonlinear.toml"] {
        for cell in cells(name) {
            let ctx = CellContext::build(&cell, 0).unwrap();
            let (_, n_x) = ctx.basis.grid_shape().unwrap();
            check(&format!("{name} d={}", ctx.basis.d()), ctx.dim.d_v, n_x);
        }
    }
    let detail = if bad.is_empty() {
        format!("{checked} configurations exact")
    } else {
        bad.join("; ")
    };
    verdict(bad.is_empty(), detail)
}

fn table(name: &str, keep_first_cell: bool, pilr_ok: impl Fn(f64) -> bool, rr_ok: impl Fn(f64, f64) -> bool) -> Verdict {
    let mut cfg = load(name);
    if keep_first_cell {
        cfg.sweep.h.truncate(1);
        cfg.sweep.steps.truncate(1);
    }
    let res = run(&cfg);
    let (p, r) = (means(&res, Method::Pilr)[0], means(&res, Method::Ridge)[0]);
    let pass = res.failures.is_empty() && pilr_ok(p) && rr_ok(r, p);
    verdict(pass, format!("PILR {p:.4} RR {r:.4} ({} seed failures)", res.failures.len()))
}

fn criterion_2() -> Verdict {
    table("bernoulli-linear.toml", true, |p| p <= 0.03, |r, _| r >= 0.15)
}

fn criterion_3() -> Verdict {
    table("bernoulli-nonlinear.toml", true, |p| p <= 0.04, |r, _| r >= 0.15)
}

fn criterion_4() -> Verdict {
    table(
        "fdm-linear.toml",
        true,
        |p| (0.5..=1.8).contains(&p),
        |r, p| (1.2..=3.4).contains(&r) && p < r,
    )
}

fn criterion_5() -> Verdict {
    let mut cfg = load("oscillator-strong.toml");
    cfg.sweep.n = vec![20];
    let res = run(&cfg);
    let (p, r) = (means(&res, Method::Pilr), means(&res, Method::Ridge));
    let ds: Vec<usize> = res.means(Method::Pilr).iter().map(|row| row.d).collect();
    let spread = p.iter().cloned().fold(0.0, f64::max) / p.iter().cloned().fold(f64::INFINITY, f64::min);
    let growth = r[r.len() - 1] / r[0];
    let pass = ds == [5, 9, 17, 33] && spread <= 3.0 && growth >= 5.0;
    verdict(
        pass,
        format!("d={ds:?} PILR {p:.3?} (max/min {spread:.2}) RR {r:.3?} (d=33/d=5 {growth:.1})"),
    )
}

fn criterion_6() -> Verdict {
    let cfg = load("misspecified-oscillator.toml");
    let res = run(&cfg);
    let total: Vec<(usize, f64)> = res.means(Method::Pilr).iter().map(|r| (r.d, r.mse_test)).collect();
    let approx = approximation_errors(&cfg, None).unwrap();
    let (d17, t17) = total[0];
    let (d33, t33) = total[1];
    let share = approx[0].1 / t17;
    let change = (t33 - t17).abs() / t17;
    let pass = d17 == 17 && d33 == 33 && (0.75..=2.1).contains(&t17) && share >= 0.9 && change < 0.05;
    verdict(
        pass,
        format!(
            "d=17 total {t17:.3} approx {:.3} (share {share:.2}); d=33 total {t33:.3} (change {:.1}%)",
            approx[0].1,
            100.0 * change
        ),
    )
}

fn criterion_7() -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    let linear = [
        "oscillator-strong.toml",
        "diffusion-strong.toml",
        "oscillator-weak.toml",
        "diffusion-weak.toml",
        "bernoulli-linear.toml",
        "fdm-linear.toml",
    ];
    for name in linear {
        let cell = &cells(name)[0];
        let cs = system(cell);
        let rn = dim_linear(cs.matrix().unwrap(), DEFAULT_RANK_TOL).unwrap().d_v;
        let pts = sample_variety_points(&cell.equation, &cs, 10, 1).unwrap();
        let sj = dim_sampled(&cs, &pts, DEFAULT_RANK_TOL).unwrap().d_v;
        if rn != sj {
            pass = false;
            notes.push(format!("{name}: {rn} vs {sj}"));
        }
    }
    let mut worst_fd: f64 = 0.0;
    for (i, (_, toml)) in OPERATOR_CONFIGS.iter().enumerate() {
        worst_fd = worst_fd.max(jacobian_fd_gap(&operator_system(toml), 50, i as u64));
    }
    pass &= worst_fd <= 1e-5;
    let mut worst_ridge: f64 = 0.0;
    for name in ["bernoulli-linear.toml", "oscillator-strong.toml", "fdm-linear.toml"] {
        let cell = &cells(name)[0];
        let cs = system(cell);
        let t = assemble_t(cs.trials()).unwrap();
        let gt = generate_solution(&cell.equation, 0).unwrap();
        let data = make_dataset(&gt, cell.sizes, 0.01, 1).unwrap();
        let problem = RegressionProblem::from_samples(cs.basis(), &data.train).unwrap();
        for xi in [1e-8, 1e-4, 1e-2] {
            let a = fit_ridge(&problem, xi).unwrap().w;
            let b = fit_pilr_linear(&problem, cs.matrix().unwrap(), &t, Penalty::new(xi, 0.0).unwrap())
                .unwrap()
                .w;
            worst_ridge = worst_ridge.max(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
    }
    pass &= worst_ridge <= 1e-12;
    notes.push(format!(
        "dims agree on {} linear benchmarks; jacobian FD gap {worst_fd:.1e}; nu=0 vs ridge {worst_ridge:.1e}",
        linear.len()
    ));
    verdict(pass, notes.join("; "))
}

fn criterion_8() -> Verdict {
    let mut pass = true;
    let mut notes = Vec::new();
    for name in ["oscillator-strong.toml", "bernoulli-linear.toml"] {
        let cs = system(&cells(name)[0]);
        let t = assemble_t(cs.trials()).unwrap();
        let d = cs.matrix().unwrap();
        let xi = 1e-3;
        let at0 = effective_dim_bound(d, &t, xi, 0.0, DEFAULT_RANK_TOL).unwrap();
        pass &= at0 == cs.d() as f64 / (1.0 + xi);
        let ladder: Vec<f64> = [0.0, 1e-3, 1.0, 1e3]
            .iter()
            .map(|&nu| effective_dim_bound(d, &t, xi, nu, DEFAULT_RANK_TOL).unwrap())
            .collect();
        pass &= ladder.windows(2).all(|w| w[1] <= w[0]);
        notes.push(format!("{name}: {ladder:.3?}"));
    }
    for name in ["bernoulli-nonlinear.toml", "fdm-nonlinear.toml"] {
        let cell = &cells(name)[0];
        let cs = system(cell);
        let full = dim_variety(&cell.equation, &cs, 0).unwrap().d_v;
        let lin_eq = cell.equation.linear_part();
        let lin_cs = pilr::assembly::ConstraintSystem::new(lin_eq.operator(), cs.basis().clone(), cs.trials().clone()).unwrap();
        let pts = sample_variety_points(&lin_eq, &lin_cs, 10, 0).unwrap();
        let lin = dim_sampled(&lin_cs, &pts, DEFAULT_RANK_TOL).unwrap().d_v;
        pass &= lin <= full;
        notes.push(format!("{name}: linear part {lin} <= {full}"));
    }
    verdict(pass, notes.join("; "))
}

fn criterion_9() -> Verdict {
    let cfg = load("ablation-bernoulli-trials.toml");
    let res = run(&cfg);
    let dims: Vec<(usize, usize)> = res.means(Method::Pilr).iter().map(|r| (r.d, r.d_v)).collect();
    let p = means(&res, Method::Pilr);
    let pass = res.failures.is_empty()
        && dims == [(100, 10), (100, 20), (100, 40)]
        && p.windows(2).all(|w| w[1] >= w[0]);
    verdict(pass, format!("(d, d_V) {dims:?}; PILR {p:.4?}"))
}

const CRITERIA: &[(u32, fn() -> Verdict, Duration)] = &[
    (1, criterion_1, Duration::from_secs(60)),
    (2, criterion_2, Duration::from_secs(5 * 60)),
    (3, criterion_3, Duration::from_secs(15 * 60)),
    (4, criterion_4, Duration::from_secs(20 * 60)),
    (5, criterion_5, Duration::from_secs(5 * 60)),
    (6, criterion_6, Duration::from_secs(2 * 60)),
    (7, criterion_7, Duration::from_secs(2 * 60)),
    (8, criterion_8, Duration::from_secs(60)),
    (9, criterion_9, Duration::from_secs(15 * 60)),
];

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for &(id, check, budget) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = v.pass && in_time;
        failed += usize::from(!pass);
        println!(
            "criterion {id}: {} {} [{:.1} s of {} s{}]",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    if selected.is_empty() || selected.contains(&10) {
        println!("criterion 10: NOTE the generalization bound's constant is unspecified; its claim is exercised by criteria 1, 5 and 9");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
