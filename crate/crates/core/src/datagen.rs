//! Ground-truth solutions, noisy datasets and best-in-span approximation error.

use nalgebra::{DMatrix, DVector, SVD};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use std::f64::consts::PI;

use crate::basis::{grid_count, BasisSet, Point};
use crate::error::{PilrError, Result};
use crate::operators::{Coefficient, Operator};

/// Equation and domain parameters of one benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EquationSpec {
    /// `y'' + (k/m) y = 0` on `[0, period]`.
    HarmonicOscillator { spring: f64, mass: f64, period: f64 },
    /// `u_t = c u_xx` on `[-half_width, half_width] x [0, horizon]`, periodic in x.
    Diffusion {
        c: f64,
        half_width: f64,
        horizon: f64,
        j_max: usize,
    },
    /// Explicit Euler rollout of `y' = -P y + Q y^rho` on `[0, horizon]`.
    Bernoulli {
        p: f64,
        q: f64,
        rho: u32,
        h: f64,
        horizon: f64,
    },
    /// Explicit FDM rollout of `u_t = c(u) u_xx`, periodic in x.
    FdmDiffusion {
        coef: Coefficient,
        h_t: f64,
        h_x: f64,
        half_width: f64,
        horizon: f64,
        j_max: usize,
    },
}

impl EquationSpec {
    pub fn operator(&self) -> Operator {
        match *self {
            EquationSpec::HarmonicOscillator { spring, mass, .. } => {
                Operator::HarmonicOscillator { spring, mass }
            }
            EquationSpec::Diffusion { c, .. } => Operator::Diffusion { c },
            EquationSpec::Bernoulli { p, q, rho, h, .. } => Operator::Bernoulli { p, q, rho, h },
            EquationSpec::FdmDiffusion { coef, h_t, h_x, .. } => {
                Operator::FdmDiffusion { coef, h_t, h_x }
            }
        }
    }

    /// Same domain and discretization with the operator replaced by its linear part.
    pub fn linear_part(&self) -> EquationSpec {
        match *self {
            EquationSpec::Bernoulli { p, h, horizon, .. } => EquationSpec::Bernoulli {
                p,
                q: 0.0,
                rho: 0,
                h,
                horizon,
            },
            EquationSpec::FdmDiffusion {
                coef,
                h_t,
                h_x,
                half_width,
                horizon,
                j_max,
            } => EquationSpec::FdmDiffusion {
                coef: Coefficient::Const(coef.value(0.0)),
                h_t,
                h_x,
                half_width,
                horizon,
                j_max,
            },
            other => other,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EquationSpec::HarmonicOscillator { .. } => "harmonic-oscillator",
            EquationSpec::Diffusion { .. } => "diffusion",
            EquationSpec::Bernoulli { .. } => "bernoulli",
            EquationSpec::FdmDiffusion { .. } => "fdm-diffusion",
        }
    }

    /// Number of initial-condition parameters drawn per solution.
    fn initial_len(&self) -> usize {
        match *self {
            EquationSpec::HarmonicOscillator { .. } => 2,
            EquationSpec::Diffusion { j_max, .. } | EquationSpec::FdmDiffusion { j_max, .. } => {
                2 * (j_max + 1)
            }
            EquationSpec::Bernoulli { .. } => 1,
        }
    }

    /// Draw initial conditions: `N(1, I)` for oscillator and diffusion
    /// amplitudes, `N(0, 1)` for the Bernoulli initial state.
    pub fn draw_initial(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mean = if matches!(self, EquationSpec::Bernoulli { .. }) {
            0.0
        } else {
            1.0
        };
        (0..self.initial_len())
            .map(|_| mean + rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Solution {
    Oscillator {
        y0: f64,
        v0: f64,
        omega: f64,
    },
    /// `sum_j [A_j cos(w_j x) + B_j sin(w_j x)] exp(-c w_j^2 t)`, `w_j = j pi / half_width`.
    FourierDecay {
        c: f64,
        half_width: f64,
        amps: Vec<(f64, f64)>,
    },
    /// `y_0 .. y_{n_t}` on a uniform grid of step `h`.
    Trajectory { h: f64, values: Vec<f64> },
    /// Rows `tau = 0..=n_t`, each holding `n_x` nodal values.
    Field {
        h_t: f64,
        h_x: f64,
        half_width: f64,
        rows: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub equation: EquationSpec,
    pub solution: Solution,
    pub initial: Vec<f64>,
    pub seed: u64,
}

fn fourier_mode(amps: &[(f64, f64)], half_width: f64, x: f64, decay: impl Fn(f64) -> f64) -> f64 {
    amps.iter()
        .enumerate()
        .map(|(j, &(a, b))| {
            let w = j as f64 * PI / half_width;
            (a * (w * x).cos() + b * (w * x).sin()) * decay(w)
        })
        .sum()
}

/// Generate a ground truth with initial conditions drawn from `seed`.
pub fn generate_solution(eq: &EquationSpec, seed: u64) -> Result<GroundTruth> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = eq.draw_initial(&mut rng);
    solve_from_initial(eq, &initial, seed)
}

/// Generate a ground truth from explicit initial conditions: `[y0, v0]`,
/// `[A_0, B_0, A_1, B_1, ...]`, or `[y0]` for Bernoulli.
pub fn solve_from_initial(eq: &EquationSpec, initial: &[f64], seed: u64) -> Result<GroundTruth> {
    if initial.len() != eq.initial_len() {
        return Err(PilrError::DimensionMismatch {
            expected: eq.initial_len(),
            found: initial.len(),
        });
    }
    let pairs = || -> Vec<(f64, f64)> { initial.chunks(2).map(|c| (c[0], c[1])).collect() };
    let solution = match *eq {
        EquationSpec::HarmonicOscillator { spring, mass, .. } => {
            if !(spring > 0.0 && mass > 0.0) {
                return Err(PilrError::InvalidParameter(
                    "spring and mass must be positive".into(),
                ));
            }
            Solution::Oscillator {
                y0: initial[0],
                v0: initial[1],
                omega: (spring / mass).sqrt(),
            }
        }
        EquationSpec::Diffusion { c, half_width, .. } => Solution::FourierDecay {
            c,
            half_width,
            amps: pairs(),
        },
        EquationSpec::Bernoulli {
            p,
            q,
            rho,
            h,
            horizon,
        } => {
            let n_t = grid_count(horizon, h)?;
            let mut values = Vec::with_capacity(n_t + 1);
            let mut y = initial[0];
            values.push(y);
            for step in 1..=n_t {
                y += h * (-p * y + q * y.powi(rho as i32));
                if !y.is_finite() || y.abs() > 1e150 {
                    return Err(PilrError::Overflow { step });
                }
                values.push(y);
            }
            Solution::Trajectory { h, values }
        }
        EquationSpec::FdmDiffusion {
            coef,
            h_t,
            h_x,
            half_width,
            horizon,
            ..
        } => {
            let ratio = coef.sup() * h_t / (h_x * h_x);
            if ratio > 0.5 {
                return Err(PilrError::UnstableScheme { ratio });
            }
            let n_t = grid_count(horizon, h_t)?;
            let n_x = grid_count(2.0 * half_width, h_x)?;
            let amps = pairs();
            let mut u: Vec<f64> = (0..n_x)
                .map(|j| fourier_mode(&amps, half_width, -half_width + j as f64 * h_x, |_| 1.0))
                .collect();
            let mut rows = Vec::with_capacity(n_t + 1);
            rows.push(u.clone());
            let inv = 1.0 / (h_x * h_x);
            for step in 1..=n_t {
                let next: Vec<f64> = (0..n_x)
                    .map(|j| {
                        let up = u[(j + 1) % n_x];
                        let down = u[(j + n_x - 1) % n_x];
                        let lap = (up - 2.0 * u[j] + down) * inv;
                        u[j] + h_t * coef.value(u[j]) * lap
                    })
                    .collect();
                if next.iter().any(|v| !v.is_finite() || v.abs() > 1e150) {
                    return Err(PilrError::Overflow { step });
                }
                u = next;
                rows.push(u.clone());
            }
            Solution::Field {
                h_t,
                h_x,
                half_width,
                rows,
            }
        }
    };
    Ok(GroundTruth {
        equation: *eq,
        solution,
        initial: initial.to_vec(),
        seed,
    })
}

impl GroundTruth {
    pub fn is_discrete(&self) -> bool {
        matches!(
            self.solution,
            Solution::Trajectory { .. } | Solution::Field { .. }
        )
    }

    /// Bounds of the continuous domain as `(x range, optional t range)`.
    pub fn domain(&self) -> ((f64, f64), Option<(f64, f64)>) {
        match self.equation {
            EquationSpec::HarmonicOscillator { period, .. } => ((0.0, period), None),
            EquationSpec::Diffusion {
                half_width,
                horizon,
                ..
            }
            | EquationSpec::FdmDiffusion {
                half_width,
                horizon,
                ..
            } => ((-half_width, half_width), Some((0.0, horizon))),
            EquationSpec::Bernoulli { horizon, .. } => ((0.0, horizon), None),
        }
    }

    /// Grid nodes carrying observations: the first `n_t` nodes of a trajectory
    /// (the coefficients of the matching indicator basis) or every node of a field.
    pub fn nodes(&self) -> Vec<Point> {
        match &self.solution {
            Solution::Trajectory { h, values } => (0..values.len() - 1)
                .map(|tau| Point::line(tau as f64 * h))
                .collect(),
            Solution::Field {
                h_t,
                h_x,
                half_width,
                rows,
            } => {
                let n_x = rows[0].len();
                (0..rows.len())
                    .flat_map(|tau| {
                        (0..n_x).map(move |j| Point::new(-half_width + j as f64 * h_x, tau as f64 * h_t))
                    })
                    .collect()
            }
            _ => Vec::new(),
        }
    }

    /// `f*(p)`. Discrete solutions are read at the grid node nearest to `p`.
    pub fn eval(&self, p: Point) -> f64 {
        match &self.solution {
            Solution::Oscillator { y0, v0, omega } => {
                y0 * (omega * p.x).cos() + v0 / omega * (omega * p.x).sin()
            }
            Solution::FourierDecay {
                c,
                half_width,
                amps,
            } => fourier_mode(amps, *half_width, p.x, |w| (-c * w * w * p.t).exp()),
            Solution::Trajectory { h, values } => {
                let tau = ((p.x / h).round().max(0.0) as usize).min(values.len() - 1);
                values[tau]
            }
            Solution::Field {
                h_t,
                h_x,
                half_width,
                rows,
            } => {
                let n_x = rows[0].len();
                let tau = ((p.t / h_t).round().max(0.0) as usize).min(rows.len() - 1);
                let j = (((p.x + half_width) / h_x).round().max(0.0) as usize) % n_x;
                rows[tau][j]
            }
        }
    }

    /// Draw a location uniformly over the domain, or over the observation nodes.
    pub fn sample_location(&self, rng: &mut impl Rng, nodes: &[Point]) -> Point {
        if self.is_discrete() {
            return nodes[rng.random_range(0..nodes.len())];
        }
        let ((x0, x1), t) = self.domain();
        let x = rng.random_range(x0..=x1);
        let t = t.map_or(0.0, |(t0, t1)| rng.random_range(t0..=t1));
        Point::new(x, t)
    }
}

/// Observation `y = f*(point) + eps`, with the noiseless value kept alongside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub point: Point,
    pub y: f64,
    pub truth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    /// Split `n` points by fractions `[train, val, test]` (rounded, train takes
    /// the remainder). Every split must be nonempty.
    pub fn from_fractions(n: usize, fractions: [f64; 3]) -> Result<Self> {
        let total: f64 = fractions.iter().sum();
        if fractions.iter().any(|f| !(*f >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(PilrError::InvalidParameter(format!(
                "split fractions must be nonnegative and sum to 1, got {fractions:?}"
            )));
        }
        if n < 3 {
            return Err(PilrError::SplitTooSmall { n });
        }
        let val = (n as f64 * fractions[1]).round() as usize;
        let test = (n as f64 * fractions[2]).round() as usize;
        if val == 0 || test == 0 || val + test >= n {
            return Err(PilrError::SplitTooSmall { n });
        }
        Ok(Self {
            train: n - val - test,
            val,
            test,
        })
    }

    /// Sizes for `n_train` training points with validation and test shares in
    /// the same proportions as `fractions` (each at least one point).
    pub fn from_train(n_train: usize, fractions: [f64; 3]) -> Result<Self> {
        let total: f64 = fractions.iter().sum();
        if fractions.iter().any(|f| !(*f >= 0.0)) || fractions[0] == 0.0 || (total - 1.0).abs() > 1e-9 {
            return Err(PilrError::InvalidParameter(format!(
                "split fractions must be nonnegative, sum to 1 and give training a share, got {fractions:?}"
            )));
        }
        if n_train == 0 {
            return Err(PilrError::SplitTooSmall { n: n_train });
        }
        let share = |f: f64| ((n_train as f64 * f / fractions[0]).round() as usize).max(1);
        Ok(Self {
            train: n_train,
            val: share(fractions[1]),
            test: share(fractions[2]),
        })
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    /// Noiseless targets.
    pub test: Vec<Sample>,
    pub noise_var: f64,
    pub seed: u64,
}

/// Sample locations, add `N(0, noise_var)` noise to the train and validation
/// targets and split by a shuffled index. Test targets stay noiseless.
pub fn make_dataset(gt: &GroundTruth, sizes: SplitSizes, noise_var: f64, seed: u64) -> Result<Dataset> {
    if sizes.train == 0 || sizes.val == 0 || sizes.test == 0 {
        return Err(PilrError::SplitTooSmall { n: sizes.total() });
    }
    if !(noise_var >= 0.0) {
        return Err(PilrError::InvalidParameter("noise variance must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = gt.nodes();
    let n = sizes.total();
    let points: Vec<Point> = (0..n).map(|_| gt.sample_location(&mut rng, &nodes)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let noise = Normal::new(0.0, noise_var.sqrt()).expect("finite standard deviation");
    let mut take = |range: std::ops::Range<usize>, noisy: bool| -> Vec<Sample> {
        order[range]
            .iter()
            .map(|&i| {
                let truth = gt.eval(points[i]);
                let eps = if noisy { noise.sample(&mut rng) } else { 0.0 };
                Sample {
                    point: points[i],
                    y: truth + eps,
                    truth,
                }
            })
            .collect()
    };
    let train = take(0..sizes.train, true);
    let val = take(sizes.train..sizes.train + sizes.val, true);
    let test = take(sizes.train + sizes.val..n, false);
    Ok(Dataset {
        train,
        val,
        test,
        noise_var,
        seed,
    })
}

/// Least-squares projection of a ground truth onto a basis span.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub weights: Vec<f64>,
    /// Mean squared projection residual over the evaluation grid.
    pub mse: f64,
    /// Numerical rank of the evaluation matrix; below `d` the pseudo-inverse was used.
    pub rank: usize,
}

/// Evaluation grid of at least `resolution` points: uniform on a line, a square
/// tensor grid in 2-D, and the observation nodes for discrete solutions.
fn evaluation_grid(gt: &GroundTruth, resolution: usize) -> Vec<Point> {
    if gt.is_discrete() {
        return gt.nodes();
    }
    let lin = |(lo, hi): (f64, f64), n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect()
    };
    match gt.domain() {
        (x, None) => lin(x, resolution.max(2)).into_iter().map(Point::line).collect(),
        (x, Some(t)) => {
            let side = (resolution as f64).sqrt().ceil().max(2.0) as usize;
            let xs = lin(x, side);
            lin(t, side)
                .into_iter()
                .flat_map(|tv| xs.iter().map(move |&xv| Point::new(xv, tv)))
                .collect()
        }
    }
}

/// Project `gt` onto `span(basis)` over a dense grid.
pub fn project(basis: &BasisSet, gt: &GroundTruth, resolution: usize) -> Result<Projection> {
    if resolution < 1000 && !gt.is_discrete() {
        return Err(PilrError::InvalidParameter(format!(
            "evaluation grid needs at least 1000 points, got {resolution}"
        )));
    }
    let grid = evaluation_grid(gt, resolution);
    let target: Vec<f64> = grid.iter().map(|&p| gt.eval(p)).collect();
    let d = basis.d();
    if basis.is_grid() {
        // Indicator columns are disjoint: least squares reduces to cell averages.
        let mut sum = vec![0.0; d];
        let mut count = vec![0usize; d];
        let mut cell_of = Vec::with_capacity(grid.len());
        for (&p, &f) in grid.iter().zip(&target) {
            let (j, _) = basis.eval_sparse(p)?[0];
            sum[j] += f;
            count[j] += 1;
            cell_of.push(j);
        }
        let weights: Vec<f64> = sum
            .iter()
            .zip(&count)
            .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect();
        let mse = cell_of
            .iter()
            .zip(&target)
            .map(|(&j, &f)| (weights[j] - f).powi(2))
            .sum::<f64>()
            / grid.len() as f64;
        let rank = count.iter().filter(|&&c| c > 0).count();
        return Ok(Projection { weights, mse, rank });
    }
    let mut phi = DMatrix::zeros(grid.len(), d);
    let mut row = vec![0.0; d];
    for (i, &p) in grid.iter().enumerate() {
        basis.fill_row(p, crate::basis::Deriv::VALUE, &mut row)?;
        for (j, &v) in row.iter().enumerate() {
            phi[(i, j)] = v;
        }
    }
    let svd = SVD::new(phi.clone(), true, true);
    let smax = svd.singular_values.max();
    let eps = 1e-10 * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let rhs = DVector::from_vec(target.clone());
    let w = svd
        .solve(&rhs, eps)
        .map_err(|e| PilrError::InvalidParameter(e.to_string()))?;
    let fitted = &phi * &w;
    let mse = fitted
        .iter()
        .zip(&target)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / grid.len() as f64;
    Ok(Projection {
        weights: w.as_slice().to_vec(),
        mse,
        rank,
    })
}

/// Best-in-span error: MSE of the least-squares projection of `f*` onto the basis.
pub fn approximation_error(basis: &BasisSet, gt: &GroundTruth, resolution: usize) -> Result<f64> {
    Ok(project(basis, gt, resolution)?.mse)
}
