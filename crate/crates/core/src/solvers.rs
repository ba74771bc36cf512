//! Ridge regression, closed-form PILR and the soft-constraint (Adam) solver.

use std::time::Instant;

use crate::assembly::{ConstraintSystem, TrialGram};
use crate::basis::{BasisSet, Point};
use crate::datagen::Sample;
use crate::error::{PilrError, Result};
use crate::linalg::{symmetric_eigenvalues, SparseMatrix, SpdMatrix, DENSE_LIMIT, DENSE_RANK_LIMIT};

/// Feature matrix `Phi_ij = phi_j(x_i)`.
pub fn design_matrix(basis: &BasisSet, points: &[Point]) -> Result<SparseMatrix> {
    let rows = points
        .iter()
        .map(|&p| basis.eval_sparse(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(SparseMatrix::from_rows(basis.d(), rows))
}

/// `Phi w` at the given points.
pub fn predict(basis: &BasisSet, w: &[f64], points: &[Point]) -> Result<Vec<f64>> {
    if w.len() != basis.d() {
        return Err(PilrError::DimensionMismatch {
            expected: basis.d(),
            found: w.len(),
        });
    }
    Ok(design_matrix(basis, points)?.mul_vec(w))
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(PilrError::DimensionMismatch {
            expected: target.len(),
            found: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(PilrError::EmptySample);
    }
    Ok(pred.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pred.len() as f64)
}

/// Training data `(Phi, y)` with an optional validation split.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    design: SparseMatrix,
    targets: Vec<f64>,
    validation: Option<(SparseMatrix, Vec<f64>)>,
}

fn check_pair(design: &SparseMatrix, targets: &[f64]) -> Result<()> {
    if targets.is_empty() {
        return Err(PilrError::EmptySample);
    }
    if design.nrows() != targets.len() {
        return Err(PilrError::DimensionMismatch {
            expected: design.nrows(),
            found: targets.len(),
        });
    }
    if !design.is_finite() || targets.iter().any(|v| !v.is_finite()) {
        return Err(PilrError::NonFiniteMatrix);
    }
    Ok(())
}

impl RegressionProblem {
    pub fn new(design: SparseMatrix, targets: Vec<f64>) -> Result<Self> {
        check_pair(&design, &targets)?;
        Ok(Self {
            design,
            targets,
            validation: None,
        })
    }

    pub fn from_samples(basis: &BasisSet, samples: &[Sample]) -> Result<Self> {
        let points: Vec<Point> = samples.iter().map(|s| s.point).collect();
        Self::new(
            design_matrix(basis, &points)?,
            samples.iter().map(|s| s.y).collect(),
        )
    }

    pub fn with_validation(mut self, design: SparseMatrix, targets: Vec<f64>) -> Result<Self> {
        check_pair(&design, &targets)?;
        if design.ncols() != self.d() {
            return Err(PilrError::DimensionMismatch {
                expected: self.d(),
                found: design.ncols(),
            });
        }
        self.validation = Some((design, targets));
        Ok(self)
    }

    pub fn with_validation_samples(self, basis: &BasisSet, samples: &[Sample]) -> Result<Self> {
        let points: Vec<Point> = samples.iter().map(|s| s.point).collect();
        let design = design_matrix(basis, &points)?;
        self.with_validation(design, samples.iter().map(|s| s.y).collect())
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }

    pub fn d(&self) -> usize {
        self.design.ncols()
    }

    pub fn design(&self) -> &SparseMatrix {
        &self.design
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn train_mse(&self, w: &[f64]) -> f64 {
        mse(&self.design.mul_vec(w), &self.targets).expect("nonempty, matching lengths")
    }

    pub fn val_mse(&self, w: &[f64]) -> Option<f64> {
        self.validation
            .as_ref()
            .map(|(phi, y)| mse(&phi.mul_vec(w), y).expect("nonempty, matching lengths"))
    }
}

/// Regularization weights: `xi` on `||w||^2`, `nu` on the physics term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub xi: f64,
    pub nu: f64,
}

impl Penalty {
    pub fn new(xi: f64, nu: f64) -> Result<Self> {
        if !(xi >= 0.0 && xi.is_finite() && nu >= 0.0 && nu.is_finite()) {
            return Err(PilrError::InvalidParameter(format!(
                "penalties must be finite and nonnegative, got xi={xi}, nu={nu}"
            )));
        }
        Ok(Self { xi, nu })
    }

    pub fn ridge(xi: f64) -> Result<Self> {
        Self::new(xi, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub w: Vec<f64>,
    pub xi: f64,
    pub nu: f64,
    pub mse_train: f64,
    pub mse_val: Option<f64>,
    /// `||p(w)||_2` when a constraint system was involved.
    pub residual_norm: Option<f64>,
    /// Zero for closed-form fits.
    pub epochs_run: usize,
    pub wall_ms: f64,
    /// The soft solver hit a non-finite loss; `w` is the best iterate before that.
    pub diverged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Normal equations `(Phi^T Phi + n M(xi, nu)) w = Phi^T y` with
/// `M = xi I + nu D^T T D`, factored afresh for every `(xi, nu)` but with the
/// Gram products formed once.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    gram: SparseMatrix,
    rhs: Vec<f64>,
    n: usize,
    constraint: Option<SparseMatrix>,
}

impl NormalEquations {
    /// Ridge-only system.
    pub fn new(problem: &RegressionProblem) -> Self {
        Self {
            gram: problem.design.gram(),
            rhs: problem.design.tr_mul_vec(&problem.targets),
            n: problem.n(),
            constraint: None,
        }
    }

    pub fn with_constraint(problem: &RegressionProblem, d: &SparseMatrix, t: &TrialGram) -> Result<Self> {
        if d.ncols() != problem.d() {
            return Err(PilrError::DimensionMismatch {
                expected: problem.d(),
                found: d.ncols(),
            });
        }
        if !d.is_finite() {
            return Err(PilrError::NonFiniteMatrix);
        }
        let mut ne = Self::new(problem);
        ne.constraint = Some(t.weighted_gram(d)?);
        Ok(ne)
    }

    pub fn d(&self) -> usize {
        self.gram.ncols()
    }

    pub fn solve(&self, pen: Penalty) -> Result<Vec<f64>> {
        let d = self.d();
        let n = self.n as f64;
        let mut a = self.gram.add_scaled(1.0, &SparseMatrix::identity(d), n * pen.xi);
        if let Some(c) = &self.constraint {
            if pen.nu > 0.0 {
                a = a.add_scaled(1.0, c, n * pen.nu);
            }
        }
        let spd = if d <= DENSE_LIMIT {
            SpdMatrix::Dense(a.to_dense())
        } else {
            SpdMatrix::Sparse(a)
        };
        // Without the ridge term the system can be singular; Cholesky alone
        // may still succeed on rounding-level pivots, so check the spectrum.
        if pen.xi == 0.0 && d <= DENSE_RANK_LIMIT {
            let SpdMatrix::Dense(m) = &spd else { unreachable!() };
            let ev = symmetric_eigenvalues(m)?;
            let top = ev.last().copied().unwrap_or(0.0);
            if top <= 0.0 || ev[0] <= 1e-12 * top {
                return Err(PilrError::SingularSystem);
            }
        }
        spd.solve(&self.rhs)
    }
}

fn closed_form_report(
    problem: &RegressionProblem,
    ne: &NormalEquations,
    pen: Penalty,
    d: Option<&SparseMatrix>,
    start: Instant,
) -> Result<FitReport> {
    let w = ne.solve(pen)?;
    Ok(FitReport {
        mse_train: problem.train_mse(&w),
        mse_val: problem.val_mse(&w),
        residual_norm: d.map(|d| norm(&d.mul_vec(&w))),
        xi: pen.xi,
        nu: pen.nu,
        w,
        epochs_run: 0,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        diverged: false,
    })
}

/// `w = (Phi^T Phi + n xi I)^{-1} Phi^T y`.
pub fn fit_ridge(problem: &RegressionProblem, xi: f64) -> Result<FitReport> {
    let start = Instant::now();
    let pen = Penalty::ridge(xi)?;
    closed_form_report(problem, &NormalEquations::new(problem), pen, None, start)
}

/// `w = (Phi^T Phi + n M(xi, nu))^{-1} Phi^T y` for a linear constraint matrix `D`.
pub fn fit_pilr_linear(
    problem: &RegressionProblem,
    d: &SparseMatrix,
    t: &TrialGram,
    pen: Penalty,
) -> Result<FitReport> {
    let start = Instant::now();
    let ne = NormalEquations::with_constraint(problem, d, t)?;
    closed_form_report(problem, &ne, pen, Some(d), start)
}

/// Adam settings for the soft-constraint solver.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub max_epochs: usize,
    /// Multiplicative learning-rate decay per epoch.
    pub decay: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            max_epochs: 2000,
            decay: 0.999,
            patience: 100,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Soft loss `(1/n)||y - Phi w||^2 + nu (1/K)||p(w)||^2 + xi ||w||^2` and its gradient.
pub fn soft_objective(
    problem: &RegressionProblem,
    cs: &ConstraintSystem,
    pen: Penalty,
    w: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if cs.d() != problem.d() {
        return Err(PilrError::DimensionMismatch {
            expected: problem.d(),
            found: cs.d(),
        });
    }
    let n = problem.n() as f64;
    let mut r = problem.design.mul_vec(w);
    for (ri, yi) in r.iter_mut().zip(&problem.targets) {
        *ri -= yi;
    }
    let mut grad = problem.design.tr_mul_vec(&r);
    for g in grad.iter_mut() {
        *g *= 2.0 / n;
    }
    let mut loss = r.iter().map(|v| v * v).sum::<f64>() / n;
    if pen.nu > 0.0 && cs.k() > 0 {
        let k = cs.k() as f64;
        let (p, jtp) = cs.residual_vjp(w)?;
        loss += pen.nu * p.iter().map(|v| v * v).sum::<f64>() / k;
        for (g, v) in grad.iter_mut().zip(&jtp) {
            *g += 2.0 * pen.nu / k * v;
        }
    }
    loss += pen.xi * w.iter().map(|v| v * v).sum::<f64>();
    for (g, v) in grad.iter_mut().zip(w) {
        *g += 2.0 * pen.xi * v;
    }
    Ok((loss, grad))
}

/// Minimize the soft loss with Adam from `w = 0`.
pub fn fit_pilr_soft(
    problem: &RegressionProblem,
    cs: &ConstraintSystem,
    pen: Penalty,
    cfg: &OptimizerConfig,
) -> Result<FitReport> {
    fit_pilr_soft_from(problem, cs, pen, cfg, &vec![0.0; problem.d()])
}

/// Adam with exponential learning-rate decay and early stopping on validation
/// MSE (training loss when there is no validation split). Returns the best
/// iterate seen.
pub fn fit_pilr_soft_from(
    problem: &RegressionProblem,
    cs: &ConstraintSystem,
    pen: Penalty,
    cfg: &OptimizerConfig,
    init: &[f64],
) -> Result<FitReport> {
    let start = Instant::now();
    let d = problem.d();
    if init.len() != d {
        return Err(PilrError::DimensionMismatch {
            expected: d,
            found: init.len(),
        });
    }
    if !(cfg.lr > 0.0 && cfg.decay > 0.0 && cfg.decay <= 1.0) {
        return Err(PilrError::InvalidParameter(
            "learning rate must be positive and decay in (0, 1]".into(),
        ));
    }
    let mut w = init.to_vec();
    let mut m = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut best_w = w.clone();
    let mut best = f64::INFINITY;
    let mut since = 0;
    let mut diverged = false;
    let mut epochs = 0;
    let (mut b1t, mut b2t) = (1.0, 1.0);
    for epoch in 0..cfg.max_epochs {
        let (loss, grad) = match soft_objective(problem, cs, pen, &w) {
            Ok(lg) => lg,
            Err(PilrError::NonFiniteField { .. }) => (f64::NAN, Vec::new()),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            diverged = true;
            break;
        }
        let score = problem.val_mse(&w).unwrap_or(loss);
        if score < best {
            best = score;
            best_w.clone_from(&w);
            since = 0;
        } else {
            since += 1;
            if since >= cfg.patience {
                break;
            }
        }
        epochs = epoch + 1;
        let lr = cfg.lr * cfg.decay.powi(epoch as i32);
        b1t *= cfg.beta1;
        b2t *= cfg.beta2;
        for j in 0..d {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * grad[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * grad[j] * grad[j];
            let mh = m[j] / (1.0 - b1t);
            let vh = v[j] / (1.0 - b2t);
            w[j] -= lr * mh / (vh.sqrt() + cfg.eps);
        }
    }
    if best.is_infinite() {
        // Diverged before the first evaluation completed.
        best_w = init.to_vec();
    }
    let residual_norm = cs.residual(&best_w).ok().map(|p| norm(&p));
    Ok(FitReport {
        mse_train: problem.train_mse(&best_w),
        mse_val: problem.val_mse(&best_w),
        residual_norm,
        xi: pen.xi,
        nu: pen.nu,
        w: best_w,
        epochs_run: epochs,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        diverged,
    })
}
