//! Experiment runner: hyperparameter search, per-seed fits, CSV output.

pub mod config;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io;
use std::time::Instant;

pub use config::{BenchConfig, Cell, Method, SolverChoice};

use crate::assembly::{assemble_t, ConstraintSystem, TrialGram};
use crate::basis::{make_basis, BasisSet};
use crate::datagen::{approximation_error, generate_solution, make_dataset, Dataset};
use crate::error::{PilrError, Result};
use crate::solvers::{
    fit_pilr_soft_from, mse, predict, FitReport, NormalEquations, OptimizerConfig, Penalty,
    RegressionProblem,
};
use crate::trials::make_trials;
use crate::variety::{dim_variety, DimReport};

/// Stream offset separating dataset draws from solution draws of one seed.
const DATA_STREAM: u64 = 0x5851_f42d_4c95_7f2d;

/// Assembled objects shared by every seed of one cell.
#[derive(Debug, Clone)]
pub struct CellContext {
    pub cell: Cell,
    pub basis: BasisSet,
    pub system: ConstraintSystem,
    pub gram: TrialGram,
    /// Constraint matrix of the linear part of the operator.
    pub linear_d: crate::linalg::SparseMatrix,
    pub dim: DimReport,
}

impl CellContext {
    pub fn build(cell: &Cell, seed: u64) -> Result<Self> {
        let basis = make_basis(&cell.basis)?;
        let trials = make_trials(&cell.trials, &basis)?;
        let op = cell.equation.operator();
        let system = ConstraintSystem::new(op, basis.clone(), trials.clone())?;
        let gram = assemble_t(&trials)?;
        let linear_d = match system.matrix() {
            Some(d) => d.clone(),
            None => ConstraintSystem::new(op.linear_part(), basis.clone(), trials)?
                .matrix()
                .expect("linear part is linear")
                .clone(),
        };
        let dim = dim_variety(&cell.equation, &system, seed)?;
        Ok(Self {
            cell: cell.clone(),
            basis,
            system,
            gram,
            linear_d,
            dim,
        })
    }
}

/// Training problem plus the factorization inputs reused across candidates.
pub struct FitContext<'a> {
    pub problem: RegressionProblem,
    pub ctx: &'a CellContext,
    ridge: NormalEquations,
    pilr: NormalEquations,
    pub solver: SolverChoice,
    pub adam: OptimizerConfig,
    pub warm_start: bool,
}

impl<'a> FitContext<'a> {
    pub fn new(
        ctx: &'a CellContext,
        data: &Dataset,
        solver: SolverChoice,
        adam: OptimizerConfig,
        warm_start: bool,
    ) -> Result<Self> {
        let problem = RegressionProblem::from_samples(&ctx.basis, &data.train)?
            .with_validation_samples(&ctx.basis, &data.val)?;
        let ridge = NormalEquations::new(&problem);
        let pilr = NormalEquations::with_constraint(&problem, &ctx.linear_d, &ctx.gram)?;
        Ok(Self {
            problem,
            ctx,
            ridge,
            pilr,
            solver,
            adam,
            warm_start,
        })
    }

    fn uses_soft(&self) -> Result<bool> {
        match self.solver {
            SolverChoice::Auto => Ok(!self.ctx.system.is_linear()),
            SolverChoice::Soft => Ok(true),
            SolverChoice::ClosedForm if self.ctx.system.is_linear() => Ok(false),
            SolverChoice::ClosedForm => Err(PilrError::NonlinearOperator),
        }
    }

    /// Fit one method at fixed penalties.
    pub fn fit(&self, method: Method, xi: f64, nu: f64) -> Result<FitReport> {
        let start = Instant::now();
        let (ne, pen, constrained) = match method {
            Method::Ridge => (&self.ridge, Penalty::ridge(xi)?, false),
            Method::Pilr => (&self.pilr, Penalty::new(xi, nu)?, true),
        };
        if constrained && self.uses_soft()? {
            let init = if self.warm_start {
                // The soft loss scales the physics term by 1/K.
                let k = self.ctx.system.k().max(1) as f64;
                ne.solve(Penalty::new(xi, nu / k)?)?
            } else {
                vec![0.0; self.problem.d()]
            };
            return fit_pilr_soft_from(&self.problem, &self.ctx.system, pen, &self.adam, &init);
        }
        let w = ne.solve(pen)?;
        let residual_norm = if constrained {
            Some(self.ctx.system.residual(&w)?.iter().map(|v| v * v).sum::<f64>().sqrt())
        } else {
            None
        };
        Ok(FitReport {
            mse_train: self.problem.train_mse(&w),
            mse_val: self.problem.val_mse(&w),
            residual_norm,
            xi: pen.xi,
            nu: pen.nu,
            w,
            epochs_run: 0,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            diverged: false,
        })
    }
}

/// Outcome of a random search.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub best: FitReport,
    pub evaluated: usize,
    pub diverged: usize,
}

fn log_uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        return lo;
    }
    10f64.powf(rng.random_range(lo.log10()..hi.log10()))
}

/// The `(xi, nu)` pairs a search with `seed` evaluates, in order.
pub fn draw_candidates(search: &config::SearchConfig, method: Method, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..search.candidates)
        .map(|_| {
            let xi = log_uniform(&mut rng, search.xi);
            let nu = log_uniform(&mut rng, search.nu);
            (xi, if method == Method::Ridge { 0.0 } else { nu })
        })
        .collect()
}

/// Seeded log-uniform random search minimizing validation MSE. Ridge searches
/// `xi` only. Ties go to the smaller `nu`, then the smaller `xi`; candidates
/// that diverge or fail to solve are skipped.
pub fn sweep_hyperparams(
    fc: &FitContext,
    method: Method,
    search: &config::SearchConfig,
    seed: u64,
) -> Result<SweepOutcome> {
    let mut best: Option<FitReport> = None;
    let mut diverged = 0;
    for (xi, nu) in draw_candidates(search, method, seed) {
        let fit = match fc.fit(method, xi, nu) {
            Ok(f) if !f.diverged && f.mse_val.is_some_and(f64::is_finite) => f,
            Ok(_) | Err(PilrError::SingularSystem) => {
                diverged += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let better = match &best {
            None => true,
            Some(b) => {
                let key = |r: &FitReport| (r.mse_val.unwrap_or(f64::INFINITY), r.nu, r.xi);
                let (a, c) = (key(&fit), key(b));
                a.0.total_cmp(&c.0)
                    .then(a.1.total_cmp(&c.1))
                    .then(a.2.total_cmp(&c.2))
                    .is_lt()
            }
        };
        if better {
            best = Some(fit);
        }
    }
    match best {
        Some(best) => Ok(SweepOutcome {
            best,
            evaluated: search.candidates,
            diverged,
        }),
        None => Err(PilrError::AllCandidatesDiverged {
            candidates: search.candidates,
        }),
    }
}

/// One output line. Per-seed rows carry `seed`, `xi`, `nu`; aggregate rows
/// carry means over seeds and the population standard deviation of test MSE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub method: String,
    pub aggregate: bool,
    pub seed: Option<u64>,
    pub d: usize,
    pub d_v: usize,
    pub n: usize,
    pub trials: usize,
    pub xi: Option<f64>,
    pub nu: Option<f64>,
    pub mse_train: f64,
    pub mse_val: Option<f64>,
    pub mse_test: f64,
    pub mse_test_std: Option<f64>,
    pub residual_norm: Option<f64>,
    pub epochs: usize,
    pub wall_ms: f64,
}

pub const CSV_COLUMNS: [&str; 17] = [
    "experiment",
    "method",
    "aggregate",
    "seed",
    "d",
    "d_v",
    "n",
    "trials",
    "xi",
    "nu",
    "mse_train",
    "mse_val",
    "mse_test",
    "mse_test_std",
    "residual_norm",
    "epochs",
    "wall_ms",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SeedFailure {
    pub cell: usize,
    pub seed: u64,
    pub error: PilrError,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub dim: DimReport,
    /// Per-seed rows followed by one aggregate row, per method.
    pub rows: Vec<ResultRow>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub experiment: String,
    pub cells: Vec<CellResult>,
    pub failures: Vec<SeedFailure>,
}

impl ExperimentResult {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.cells.iter().flat_map(|c| c.rows.iter().cloned()).collect()
    }

    /// Aggregate rows of one method, in cell order.
    pub fn means(&self, method: Method) -> Vec<&ResultRow> {
        self.cells
            .iter()
            .flat_map(|c| &c.rows)
            .filter(|r| r.aggregate && r.method == method.label())
            .collect()
    }

    /// Per-seed rows of one method in one cell.
    pub fn seed_rows(&self, method: Method, cell: usize) -> Vec<&ResultRow> {
        self.cells[cell]
            .rows
            .iter()
            .filter(|r| !r.aggregate && r.method == method.label())
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads for the per-seed loop; 0 uses the rayon default.
    pub jobs: usize,
    pub base_seed: Option<u64>,
    pub progress: bool,
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| PilrError::InvalidParameter(e.to_string()))?;
    Ok(pool.install(f))
}

fn seed_row(
    cfg: &BenchConfig,
    ctx: &CellContext,
    method: Method,
    seed: u64,
    fit: &FitReport,
    mse_test: f64,
) -> ResultRow {
    ResultRow {
        experiment: cfg.experiment.clone(),
        method: method.label().into(),
        aggregate: false,
        seed: Some(seed),
        d: ctx.basis.d(),
        d_v: ctx.dim.d_v,
        n: ctx.cell.n,
        trials: ctx.system.k(),
        xi: Some(fit.xi),
        nu: Some(fit.nu),
        mse_train: fit.mse_train,
        mse_val: fit.mse_val,
        mse_test,
        mse_test_std: None,
        residual_norm: fit.residual_norm,
        epochs: fit.epochs_run,
        wall_ms: if cfg.timing { fit.wall_ms } else { 0.0 },
    }
}

fn mean_row(rows: &[ResultRow], template: ResultRow) -> ResultRow {
    let n = rows.len() as f64;
    let mean = |f: &dyn Fn(&ResultRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let opt_mean = |f: &dyn Fn(&ResultRow) -> Option<f64>| {
        rows.iter().map(f).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / n)
    };
    let test = mean(&|r| r.mse_test);
    let var = rows.iter().map(|r| (r.mse_test - test).powi(2)).sum::<f64>() / n;
    ResultRow {
        aggregate: true,
        seed: None,
        xi: None,
        nu: None,
        mse_train: mean(&|r| r.mse_train),
        mse_val: opt_mean(&|r| r.mse_val),
        mse_test: test,
        mse_test_std: Some(var.sqrt()),
        residual_norm: opt_mean(&|r| r.residual_norm),
        epochs: mean(&|r| r.epochs as f64).round() as usize,
        wall_ms: mean(&|r| r.wall_ms),
        ..template
    }
}

/// Selected fit and its test MSE, per method.
pub type SeedFits = Vec<(Method, FitReport, f64)>;

/// Fit every configured method on one seed of one cell.
pub fn run_seed(cfg: &BenchConfig, ctx: &CellContext, seed: u64) -> Result<SeedFits> {
    let gt = generate_solution(&ctx.cell.equation, seed)?;
    let data = make_dataset(&gt, ctx.cell.sizes, cfg.noise_var, seed ^ DATA_STREAM)?;
    let fc = FitContext::new(
        ctx,
        &data,
        cfg.optimizer.solver,
        cfg.optimizer.adam(),
        cfg.optimizer.warm_start,
    )?;
    let test_points: Vec<_> = data.test.iter().map(|s| s.point).collect();
    let test_truth: Vec<f64> = data.test.iter().map(|s| s.truth).collect();
    cfg.methods
        .iter()
        .map(|&method| {
            let sweep = sweep_hyperparams(&fc, method, &cfg.search, cfg.search.seed.wrapping_add(seed))?;
            let pred = predict(&ctx.basis, &sweep.best.w, &test_points)?;
            Ok((method, sweep.best, mse(&pred, &test_truth)?))
        })
        .collect()
}

/// Run every cell over every seed. Seed-level errors are recorded and the
/// remaining seeds still run; cell-level errors abort.
pub fn run_experiment(cfg: &BenchConfig, opts: &RunOptions) -> Result<ExperimentResult> {
    let base = opts.base_seed.unwrap_or(cfg.base_seed);
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|s| base + s).collect();
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for (ci, cell) in cfg.cells()?.iter().enumerate() {
        let ctx = CellContext::build(cell, base)?;
        if opts.progress {
            eprintln!(
                "[{}] cell {ci}: d={} d_V={} K={}",
                cfg.experiment,
                ctx.basis.d(),
                ctx.dim.d_v,
                ctx.system.k()
            );
        }
        let outcomes: Vec<(u64, Result<SeedFits>)> = with_pool(opts.jobs, || {
            seeds.par_iter().map(|&s| (s, run_seed(cfg, &ctx, s))).collect()
        })?;
        let mut per_method: Vec<Vec<ResultRow>> = vec![Vec::new(); cfg.methods.len()];
        for (seed, outcome) in outcomes {
            match outcome {
                Ok(fits) => {
                    for (mi, (method, fit, test)) in fits.iter().enumerate() {
                        per_method[mi].push(seed_row(cfg, &ctx, *method, seed, fit, *test));
                    }
                }
                Err(error) => failures.push(SeedFailure { cell: ci, seed, error }),
            }
        }
        let mut rows = Vec::new();
        for seed_rows in per_method {
            if let Some(first) = seed_rows.first().cloned() {
                let agg = mean_row(&seed_rows, first);
                rows.extend(seed_rows);
                rows.push(agg);
            }
        }
        cells.push(CellResult { dim: ctx.dim, rows });
    }
    Ok(ExperimentResult {
        experiment: cfg.experiment.clone(),
        cells,
        failures,
    })
}

/// Mean and population standard deviation of the best-in-span error per cell.
pub fn approximation_errors(cfg: &BenchConfig, base_seed: Option<u64>) -> Result<Vec<(usize, f64, f64)>> {
    let base = base_seed.unwrap_or(cfg.base_seed);
    cfg.cells()?
        .iter()
        .map(|cell| {
            let basis = make_basis(&cell.basis)?;
            let errs = (0..cfg.seeds as u64)
                .map(|s| approximation_error(&basis, &generate_solution(&cell.equation, base + s)?, 4096))
                .collect::<Result<Vec<f64>>>()?;
            let n = errs.len() as f64;
            let mean = errs.iter().sum::<f64>() / n;
            let std = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
            Ok((basis.d(), mean, std))
        })
        .collect()
}

/// Write rows as CSV with a header line (also written when `rows` is empty).
pub fn emit_csv<W: io::Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let to_err = |e: csv::Error| PilrError::Io {
        path: "<csv>".into(),
        message: e.to_string(),
    };
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(to_err)?;
    for r in rows {
        w.serialize(r).map_err(to_err)?;
    }
    w.flush().map_err(|e| PilrError::Io {
        path: "<csv>".into(),
        message: e.to_string(),
    })
}

pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<Vec<ResultRow>, _>>()
        .map_err(|e| PilrError::Io {
            path: "<csv>".into(),
            message: e.to_string(),
        })
}

/// Plain-text table of the aggregate rows.
pub fn summary_table(result: &ExperimentResult) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# pilr {}; xi/nu chosen by seeded log-uniform random search on validation MSE",
        env!("CARGO_PKG_VERSION")
    );
    let _ = writeln!(
        s,
        "{:<28} {:<6} {:>6} {:>5} {:>6} {:>6}  {:>22}",
        "experiment", "method", "d", "d_V", "n", "K", "test MSE (mean ± std)"
    );
    for r in result.cells.iter().flat_map(|c| &c.rows).filter(|r| r.aggregate) {
        let _ = writeln!(
            s,
            "{:<28} {:<6} {:>6} {:>5} {:>6} {:>6}  {:>11.4e} ± {:<9.3e}",
            r.experiment,
            r.method,
            r.d,
            r.d_v,
            r.n,
            r.trials,
            r.mse_test,
            r.mse_test_std.unwrap_or(0.0)
        );
    }
    for f in &result.failures {
        let _ = writeln!(s, "cell {} seed {} failed: {}", f.cell, f.seed, f.error);
    }
    s
}
