//! Trial functions paired with Dirac or Lebesgue measures.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::basis::{BasisSet, Point};
use crate::error::{PilrError, Result};

/// Default trapezoid resolution for one-dimensional Lebesgue trials.
pub const DEFAULT_NODES_1D: usize = 4096;
/// Default trapezoid resolution per axis for two-dimensional Lebesgue trials.
pub const DEFAULT_NODES_2D: usize = 256;

/// Trial function `psi`. Oscillating trials act on the `x` coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrialFn {
    Unit,
    Cos(f64),
    Sin(f64),
}

impl TrialFn {
    pub fn eval(&self, p: Point) -> f64 {
        match *self {
            TrialFn::Unit => 1.0,
            TrialFn::Cos(w) => (w * p.x).cos(),
            TrialFn::Sin(w) => (w * p.x).sin(),
        }
    }
}

/// Closed integration box with its trapezoid resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadBox {
    pub x: (f64, f64),
    /// `None` for one-dimensional domains.
    pub t: Option<(f64, f64)>,
    pub nodes_x: usize,
    pub nodes_t: usize,
}

impl QuadBox {
    pub fn line(lo: f64, hi: f64, nodes: usize) -> Self {
        Self {
            x: (lo, hi),
            t: None,
            nodes_x: nodes,
            nodes_t: 1,
        }
    }

    pub fn rect(x: (f64, f64), t: (f64, f64), nodes_x: usize, nodes_t: usize) -> Self {
        Self {
            x,
            t: Some(t),
            nodes_x,
            nodes_t,
        }
    }

    pub fn volume(&self) -> f64 {
        let lx = self.x.1 - self.x.0;
        match self.t {
            Some(t) => lx * (t.1 - t.0),
            None => lx,
        }
    }

    /// Overlap with `other`, keeping this box's resolution. `None` when the overlap
    /// has zero volume.
    pub fn intersect(&self, other: &QuadBox) -> Option<QuadBox> {
        let clip = |a: (f64, f64), b: (f64, f64)| {
            let lo = a.0.max(b.0);
            let hi = a.1.min(b.1);
            (hi > lo).then_some((lo, hi))
        };
        let x = clip(self.x, other.x)?;
        let t = match (self.t, other.t) {
            (Some(a), Some(b)) => Some(clip(a, b)?),
            (None, None) => None,
            _ => return None,
        };
        Some(QuadBox { x, t, ..*self })
    }

    /// Composite trapezoid nodes and weights.
    pub fn nodes(&self) -> Vec<(Point, f64)> {
        let axis = |(lo, hi): (f64, f64), n: usize| -> Vec<(f64, f64)> {
            let h = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| {
                    let v = if i == n - 1 { hi } else { lo + i as f64 * h };
                    let w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
                    (v, w)
                })
                .collect()
        };
        let xs = axis(self.x, self.nodes_x);
        match self.t {
            None => xs.into_iter().map(|(x, w)| (Point::line(x), w)).collect(),
            Some(t) => {
                let ts = axis(t, self.nodes_t);
                let mut out = Vec::with_capacity(xs.len() * ts.len());
                for &(tv, wt) in &ts {
                    for &(xv, wx) in &xs {
                        out.push((Point::new(xv, tv), wx * wt));
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measure {
    Dirac(Point),
    Lebesgue(QuadBox),
}

impl Measure {
    /// Quadrature rule realizing the measure: a single unit-weight node for Dirac.
    pub fn nodes(&self) -> Vec<(Point, f64)> {
        match self {
            Measure::Dirac(p) => vec![(*p, 1.0)],
            Measure::Lebesgue(b) => b.nodes(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    pub psi: TrialFn,
    pub measure: Measure,
}

/// Ordered collection of `(psi_k, mu_k)` pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialSet {
    pairs: Vec<Trial>,
}

impl TrialSet {
    pub fn new(pairs: Vec<Trial>) -> Result<Self> {
        for tr in &pairs {
            match tr.measure {
                Measure::Dirac(p) if !p.is_finite() => {
                    return Err(PilrError::InvalidParameter(
                        "Dirac point must be finite".into(),
                    ))
                }
                Measure::Lebesgue(b) => {
                    if !(b.volume() > 0.0) {
                        return Err(PilrError::InvalidParameter(
                            "Lebesgue box must have positive volume".into(),
                        ));
                    }
                    if b.nodes_x < 2 || (b.t.is_some() && b.nodes_t < 2) {
                        return Err(PilrError::InvalidParameter(
                            "Lebesgue quadrature needs at least 2 nodes per axis".into(),
                        ));
                    }
                }
                _ => {}
            }
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[Trial] {
        &self.pairs
    }

    /// First `k` pairs, in order.
    pub fn truncated(&self, k: usize) -> TrialSet {
        TrialSet {
            pairs: self.pairs[..k.min(self.pairs.len())].to_vec(),
        }
    }

    pub fn all_dirac(&self) -> bool {
        self.pairs
            .iter()
            .all(|t| matches!(t.measure, Measure::Dirac(_)))
    }
}

/// How a trial set is generated.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialSpec {
    /// Explicit Dirac points with `psi = 1`.
    DiracPoints(Vec<Point>),
    /// `count` points drawn uniformly (with replacement) from `pool`.
    DiracFromPool {
        pool: Vec<Point>,
        count: usize,
        seed: u64,
    },
    /// `count` points drawn uniformly over the basis domain.
    DiracUniform { count: usize, seed: u64 },
    /// Every forward node of an indicator grid (no trial on the final time row),
    /// in row-major order or, with `order_seed`, in a seeded random order;
    /// `keep` retains only the first pairs, so subsets with one seed are nested.
    GridNodes {
        keep: Option<usize>,
        order_seed: Option<u64>,
    },
    /// `count` trials `1, cos(w_1 x), sin(w_1 x), cos(w_2 x), ...` with
    /// `w_k = 2 pi k / period`, Lebesgue measure on `[0, period]`.
    WeakFourier {
        period: f64,
        count: usize,
        nodes: usize,
    },
    /// `windows` equal time windows times `2 * freqs` spatial trials
    /// `cos(w_k x)`, `sin(w_k x)` with `w_k = k pi / half_width`.
    WeakWindowedFourier {
        half_width: f64,
        horizon: f64,
        windows: usize,
        freqs: usize,
        nodes: usize,
    },
}

fn unit_dirac(points: impl IntoIterator<Item = Point>) -> Vec<Trial> {
    points
        .into_iter()
        .map(|p| Trial {
            psi: TrialFn::Unit,
            measure: Measure::Dirac(p),
        })
        .collect()
}

/// Build a trial set. `basis` supplies the domain and grid for the sampled and
/// grid-node variants.
pub fn make_trials(spec: &TrialSpec, basis: &BasisSet) -> Result<TrialSet> {
    let pairs = match spec {
        TrialSpec::DiracPoints(points) => {
            for &p in points {
                basis.check_domain(p)?;
            }
            unit_dirac(points.iter().copied())
        }
        TrialSpec::DiracFromPool { pool, count, seed } => {
            if pool.is_empty() {
                return Err(PilrError::EmptyPointPool);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let picks: Vec<Point> = (0..*count)
                .map(|_| pool[rng.random_range(0..pool.len())])
                .collect();
            for &p in &picks {
                basis.check_domain(p)?;
            }
            unit_dirac(picks)
        }
        TrialSpec::DiracUniform { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let dom = basis.domain();
            let points: Vec<Point> = (0..*count)
                .map(|_| {
                    let x = rng.random_range(dom.x.0..=dom.x.1);
                    let t = dom.t.map_or(0.0, |(lo, hi)| rng.random_range(lo..=hi));
                    Point::new(x, t)
                })
                .collect();
            unit_dirac(points)
        }
        TrialSpec::GridNodes { keep, order_seed } => {
            let (rows, n_x) = basis.grid_shape().ok_or_else(|| {
                PilrError::InvalidParameter("grid-node trials need an indicator basis".into())
            })?;
            let forward = (rows - 1) * n_x;
            let k = keep.unwrap_or(forward).min(forward);
            let mut order: Vec<usize> = (0..forward).collect();
            if let Some(seed) = order_seed {
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            }
            let points = order[..k].iter().map(|&i| {
                basis
                    .grid_node(i / n_x, i % n_x)
                    .expect("forward nodes lie on the grid")
            });
            unit_dirac(points)
        }
        TrialSpec::WeakFourier {
            period,
            count,
            nodes,
        } => {
            if !(*period > 0.0) {
                return Err(PilrError::InvalidExtent {
                    name: "period",
                    value: *period,
                });
            }
            let quad = QuadBox::line(0.0, *period, *nodes);
            (0..*count)
                .map(|k| {
                    let psi = if k == 0 {
                        TrialFn::Unit
                    } else {
                        let w = 2.0 * PI * k.div_ceil(2) as f64 / period;
                        if k % 2 == 1 {
                            TrialFn::Cos(w)
                        } else {
                            TrialFn::Sin(w)
                        }
                    };
                    Trial {
                        psi,
                        measure: Measure::Lebesgue(quad),
                    }
                })
                .collect()
        }
        TrialSpec::WeakWindowedFourier {
            half_width,
            horizon,
            windows,
            freqs,
            nodes,
        } => {
            if *windows == 0 || *freqs == 0 {
                return Err(PilrError::InvalidParameter(
                    "windows and freqs must be at least 1".into(),
                ));
            }
            let width = horizon / *windows as f64;
            let mut pairs = Vec::with_capacity(windows * freqs * 2);
            for k in 0..*windows {
                let t0 = k as f64 * width;
                let t1 = if k + 1 == *windows {
                    *horizon
                } else {
                    (k + 1) as f64 * width
                };
                let quad = QuadBox::rect((-half_width, *half_width), (t0, t1), *nodes, *nodes);
                for kx in 1..=*freqs {
                    let w = kx as f64 * PI / half_width;
                    for psi in [TrialFn::Cos(w), TrialFn::Sin(w)] {
                        pairs.push(Trial {
                            psi,
                            measure: Measure::Lebesgue(quad),
                        });
                    }
                }
            }
            pairs
        }
    };
    TrialSet::new(pairs)
}

/// Sample `count` distinct indices below `n` (all of them when `count >= n`).
pub fn sample_indices(n: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    index::sample(&mut rng, n, count.min(n)).into_vec()
}
