//! Dimension of the solution variety and the effective-dimension bound.

use num_bigint::BigUint;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{ConstraintSystem, TrialGram};
use crate::datagen::{generate_solution, project, EquationSpec, GroundTruth};
use crate::error::{PilrError, Result};
use crate::linalg::{numeric_rank_sparse, symmetric_eigenvalues, SparseMatrix};

/// Relative singular-value cutoff used for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;
/// Variety points sampled when the operator is nonlinear.
pub const DEFAULT_SAMPLES: usize = 10;
/// Dense evaluation grid used to project simulated solutions onto the basis.
const PROJECTION_RESOLUTION: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimMethod {
    /// `d - rank D`.
    RankNullity,
    /// `max_i (d - rank J(w_i))` over sampled points `w_i`.
    SampledJacobian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimReport {
    pub d: usize,
    pub d_v: usize,
    pub method: DimMethod,
    /// Jacobian rank at each sample (a single entry for the linear case).
    pub ranks: Vec<usize>,
    pub tolerance: f64,
}

/// `d_V = d - rank D` for a linear constraint matrix.
pub fn dim_linear(d: &SparseMatrix, tol: f64) -> Result<DimReport> {
    let rank = numeric_rank_sparse(d, tol)?;
    Ok(DimReport {
        d: d.ncols(),
        d_v: d.ncols() - rank,
        method: DimMethod::RankNullity,
        ranks: vec![rank],
        tolerance: tol,
    })
}

/// Weights of simulated solutions projected onto the basis of `cs`.
///
/// Simulations that blow up are skipped and redrawn (up to `10 * count`
/// draws). Each point is checked against the residual map: a projection that leaves
/// `||p(w)||_inf > 1e-6 (1 + ||w||_2)` means the basis cannot represent the
/// simulated solution and is reported as an error.
pub fn sample_variety_points(
    eq: &EquationSpec,
    cs: &ConstraintSystem,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(PilrError::EmptySample);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    let mut last_err = None;
    for _ in 0..10 * count {
        if points.len() == count {
            break;
        }
        let gt = match generate_solution(eq, rng.next_u64()) {
            Ok(gt) => gt,
            Err(e @ PilrError::Overflow { .. }) => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        points.push(project_checked(cs, &gt)?);
    }
    if points.len() < count {
        return Err(last_err.unwrap_or(PilrError::EmptySample));
    }
    Ok(points)
}

fn project_checked(cs: &ConstraintSystem, gt: &GroundTruth) -> Result<Vec<f64>> {
    let w = project(cs.basis(), gt, PROJECTION_RESOLUTION)?.weights;
    let r = cs.residual(&w)?;
    let worst = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let limit = 1e-6 * (1.0 + w.iter().map(|v| v * v).sum::<f64>().sqrt());
    if worst > limit {
        return Err(PilrError::ProjectionFailure {
            residual: worst,
            limit,
        });
    }
    Ok(w)
}

/// `d_V = max_i (d - rank J(w_i))` over the given points.
pub fn dim_sampled(cs: &ConstraintSystem, points: &[Vec<f64>], tol: f64) -> Result<DimReport> {
    if points.is_empty() {
        return Err(PilrError::EmptySample);
    }
    let ranks = points
        .iter()
        .map(|w| numeric_rank_sparse(&cs.jacobian(w)?, tol))
        .collect::<Result<Vec<_>>>()?;
    let d = cs.d();
    let min_rank = *ranks.iter().min().expect("nonempty");
    Ok(DimReport {
        d,
        d_v: d - min_rank,
        method: DimMethod::SampledJacobian,
        ranks,
        tolerance: tol,
    })
}

/// Rank-nullity for linear systems, sampled Jacobians otherwise.
pub fn dim_variety(eq: &EquationSpec, cs: &ConstraintSystem, seed: u64) -> Result<DimReport> {
    match cs.matrix() {
        Some(d) => dim_linear(d, DEFAULT_RANK_TOL),
        None => {
            let pts = sample_variety_points(eq, cs, DEFAULT_SAMPLES, seed)?;
            dim_sampled(cs, &pts, DEFAULT_RANK_TOL)
        }
    }
}

/// `d_V / (1 + xi) + sum_{alpha > 0} 1 / (1 + xi + nu alpha)` over the
/// eigenvalues `alpha` of `D^T T D`; eigenvalues at or below `tol * alpha_max`
/// count as null directions. Forms `D^T T D` densely.
pub fn effective_dim_bound(d: &SparseMatrix, t: &TrialGram, xi: f64, nu: f64, tol: f64) -> Result<f64> {
    if !(xi >= 0.0 && nu >= 0.0 && xi.is_finite() && nu.is_finite()) {
        return Err(PilrError::InvalidParameter(format!(
            "penalties must be finite and nonnegative, got xi={xi}, nu={nu}"
        )));
    }
    let dim = d.ncols();
    if nu == 0.0 {
        return Ok(dim as f64 / (1.0 + xi));
    }
    let alphas = symmetric_eigenvalues(&t.weighted_gram(d)?.to_dense())?;
    let top = alphas.last().copied().unwrap_or(0.0).max(0.0);
    let mut null = 0usize;
    let mut acc = 0.0;
    for &a in &alphas {
        if a <= tol * top {
            null += 1;
        } else {
            acc += 1.0 / (1.0 + xi + nu * a);
        }
    }
    Ok(null as f64 / (1.0 + xi) + acc)
}

/// `rho (2 rho - 1)^(d + 1)`: bound on the degree of a variety cut out by
/// polynomial constraints of degree `rho` in `d` unknowns.
pub fn beta_upper_bound(rho: u32, d: u32) -> Result<BigUint> {
    if rho == 0 {
        return Err(PilrError::InvalidParameter("degree must be at least 1".into()));
    }
    Ok(BigUint::from(rho) * BigUint::from(2 * rho - 1).pow(d + 1))
}
