//! Basis families used by the regression experiments.
//!
//! Four families are provided:
//!
//! * `Fourier1D`: `1, cos(w_1 x), sin(w_1 x), ...` on `[0, T]` with `w_j = 2 pi j / T`.
//! * `DiffusionTensor`: `1` followed by `cos(w_j x) exp(-c w_j'^2 t)` and the matching
//!   sine, on `[-Xi, Xi] x [0, T]` with `w_j = j pi / Xi`.
//! * `GridIndicator1D`: cell indicators `[t_tau, t_tau+1)` on `[0, T]`.
//! * `GridIndicator2D`: space-time cell indicators on an `(n_t + 1) x n_x` node grid,
//!   ordered row-major in `(tau, j)`.
//!
//! One-dimensional families read the `x` coordinate of a [`Point`].

use nalgebra::DMatrix;
use std::f64::consts::PI;

use crate::error::{PilrError, Result};

const DOMAIN_SLACK: f64 = 1e-9;
const GRID_SNAP: f64 = 1e-9;

/// A location in the (at most two-dimensional) input domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub t: f64,
}

impl Point {
    pub const fn new(x: f64, t: f64) -> Self {
        Self { x, t }
    }

    /// A point for one-dimensional families.
    pub const fn line(x: f64) -> Self {
        Self { x, t: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.t.is_finite()
    }
}

/// Partial derivative multi-index `(d/dx)^x (d/dt)^t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Deriv {
    pub x: u8,
    pub t: u8,
}

impl Deriv {
    pub const VALUE: Deriv = Deriv { x: 0, t: 0 };
    pub const DT: Deriv = Deriv { x: 0, t: 1 };
    pub const DX: Deriv = Deriv { x: 1, t: 0 };
    pub const DXX: Deriv = Deriv { x: 2, t: 0 };

    pub const fn new(x: u8, t: u8) -> Self {
        Self { x, t }
    }

    pub fn order(&self) -> u8 {
        self.x + self.t
    }
}

/// Construction parameters for a [`BasisSet`].
#[derive(Debug, Clone, PartialEq)]
pub enum BasisSpec {
    Fourier1D {
        period: f64,
        d_t: usize,
        /// Drop frequency index 1 and append `d_t + 1` so that `d` is unchanged.
        omit_fundamental: bool,
    },
    DiffusionTensor {
        half_width: f64,
        horizon: f64,
        c: f64,
        d_x: usize,
        d_t: usize,
    },
    GridIndicator1D {
        extent: f64,
        step: f64,
    },
    GridIndicator2D {
        half_width: f64,
        horizon: f64,
        h_t: f64,
        h_x: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Fourier1D {
        period: f64,
        freqs: Vec<usize>,
    },
    DiffusionTensor {
        half_width: f64,
        horizon: f64,
        c: f64,
        d_x: usize,
        d_t: usize,
    },
    GridIndicator1D {
        extent: f64,
        step: f64,
        cells: usize,
    },
    GridIndicator2D {
        half_width: f64,
        horizon: f64,
        h_t: f64,
        h_x: f64,
        n_t: usize,
        n_x: usize,
    },
}

/// Closed rectangular domain of a basis. `t` is `None` for one-dimensional families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub x: (f64, f64),
    pub t: Option<(f64, f64)>,
}

impl Domain {
    pub fn contains(&self, p: Point) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| {
            let slack = DOMAIN_SLACK * (hi - lo).abs().max(1.0);
            v >= lo - slack && v <= hi + slack
        };
        inside(p.x, self.x) && self.t.is_none_or(|t| inside(p.t, t))
    }

    pub fn dims(&self) -> usize {
        if self.t.is_some() {
            2
        } else {
            1
        }
    }
}

/// A finite family of basis functions with analytic derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    family: Family,
    misspecified: bool,
    d: usize,
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(PilrError::InvalidExtent { name, value })
    }
}

fn at_least_one(name: &str, value: usize) -> Result<()> {
    if value == 0 {
        Err(PilrError::InvalidParameter(format!("{name} must be at least 1")))
    } else {
        Ok(())
    }
}

/// Number of grid steps in `extent`, requiring the step to divide it.
pub(crate) fn grid_count(extent: f64, step: f64) -> Result<usize> {
    let ratio = extent / step;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * n {
        return Err(PilrError::InconsistentGrid { step, extent });
    }
    Ok(n as usize)
}

/// Build a basis family from its parameters.
pub fn make_basis(spec: &BasisSpec) -> Result<BasisSet> {
    match *spec {
        BasisSpec::Fourier1D {
            period,
            d_t,
            omit_fundamental,
        } => {
            positive("period", period)?;
            at_least_one("d_t", d_t)?;
            let freqs: Vec<usize> = if omit_fundamental {
                (2..=d_t + 1).collect()
            } else {
                (1..=d_t).collect()
            };
            Ok(BasisSet {
                d: 2 * d_t + 1,
                family: Family::Fourier1D { period, freqs },
                misspecified: omit_fundamental,
            })
        }
        BasisSpec::DiffusionTensor {
            half_width,
            horizon,
            c,
            d_x,
            d_t,
        } => {
            positive("half_width", half_width)?;
            positive("horizon", horizon)?;
            positive("c", c)?;
            at_least_one("d_x", d_x)?;
            at_least_one("d_t", d_t)?;
            Ok(BasisSet {
                d: 2 * d_x * d_t + 1,
                family: Family::DiffusionTensor {
                    half_width,
                    horizon,
                    c,
                    d_x,
                    d_t,
                },
                misspecified: false,
            })
        }
        BasisSpec::GridIndicator1D { extent, step } => {
            positive("extent", extent)?;
            positive("step", step)?;
            let cells = grid_count(extent, step)?;
            Ok(BasisSet {
                d: cells,
                family: Family::GridIndicator1D {
                    extent,
                    step,
                    cells,
                },
                misspecified: false,
            })
        }
        BasisSpec::GridIndicator2D {
            half_width,
            horizon,
            h_t,
            h_x,
        } => {
            positive("half_width", half_width)?;
            positive("horizon", horizon)?;
            positive("h_t", h_t)?;
            positive("h_x", h_x)?;
            let n_t = grid_count(horizon, h_t)?;
            let n_x = grid_count(2.0 * half_width, h_x)?;
            Ok(BasisSet {
                d: (n_t + 1) * n_x,
                family: Family::GridIndicator2D {
                    half_width,
                    horizon,
                    h_t,
                    h_x,
                    n_t,
                    n_x,
                },
                misspecified: false,
            })
        }
    }
}

/// `d^order/dx^order` of `cos(a x)` (`sine = false`) or `sin(a x)`.
fn trig_deriv(sine: bool, a: f64, x: f64, order: u8) -> f64 {
    let (s, c) = (a * x).sin_cos();
    match (sine, order) {
        (false, 0) => c,
        (false, 1) => -a * s,
        (false, 2) => -a * a * c,
        (true, 0) => s,
        (true, 1) => a * c,
        (true, 2) => -a * a * s,
        _ => unreachable!("orders above 2 are rejected before evaluation"),
    }
}

impl BasisSet {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn is_misspecified(&self) -> bool {
        self.misspecified
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::Fourier1D { .. } => "fourier-1d",
            Family::DiffusionTensor { .. } => "diffusion-tensor",
            Family::GridIndicator1D { .. } => "grid-indicator-1d",
            Family::GridIndicator2D { .. } => "grid-indicator-2d",
        }
    }

    /// Indicator families carry nodal values rather than smooth functions.
    pub fn is_grid(&self) -> bool {
        matches!(
            self.family,
            Family::GridIndicator1D { .. } | Family::GridIndicator2D { .. }
        )
    }

    pub fn domain(&self) -> Domain {
        match self.family {
            Family::Fourier1D { period, .. } => Domain {
                x: (0.0, period),
                t: None,
            },
            Family::DiffusionTensor {
                half_width,
                horizon,
                ..
            }
            | Family::GridIndicator2D {
                half_width,
                horizon,
                ..
            } => Domain {
                x: (-half_width, half_width),
                t: Some((0.0, horizon)),
            },
            Family::GridIndicator1D { extent, .. } => Domain {
                x: (0.0, extent),
                t: None,
            },
        }
    }

    /// Angular frequencies of the Fourier family, in basis order (one per cos/sin pair).
    pub fn fourier_frequencies(&self) -> Option<Vec<f64>> {
        match &self.family {
            Family::Fourier1D { period, freqs } => Some(
                freqs
                    .iter()
                    .map(|&j| 2.0 * PI * j as f64 / period)
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Number of time rows and spatial columns of an indicator grid (`n_x = 1` in 1-D).
    pub fn grid_shape(&self) -> Option<(usize, usize)> {
        match self.family {
            Family::GridIndicator1D { cells, .. } => Some((cells, 1)),
            Family::GridIndicator2D { n_t, n_x, .. } => Some((n_t + 1, n_x)),
            _ => None,
        }
    }

    /// Location of grid node `(tau, j)`.
    pub fn grid_node(&self, tau: usize, j: usize) -> Option<Point> {
        match self.family {
            Family::GridIndicator1D { step, cells, .. } if tau < cells && j == 0 => {
                Some(Point::line(tau as f64 * step))
            }
            Family::GridIndicator2D {
                half_width,
                h_t,
                h_x,
                n_t,
                n_x,
                ..
            } if tau <= n_t && j < n_x => {
                Some(Point::new(-half_width + j as f64 * h_x, tau as f64 * h_t))
            }
            _ => None,
        }
    }

    /// Grid cell `(tau, j)` containing `p`. Cells are half-open on the right,
    /// with the last cell of each axis closed.
    pub fn grid_cell(&self, p: Point) -> Result<(usize, usize)> {
        self.check_domain(p)?;
        let snap = |v: f64, step: f64, last: usize| {
            let k = (v / step + GRID_SNAP).floor().max(0.0) as usize;
            k.min(last)
        };
        match self.family {
            Family::GridIndicator1D { step, cells, .. } => Ok((snap(p.x, step, cells - 1), 0)),
            Family::GridIndicator2D {
                half_width,
                h_t,
                h_x,
                n_t,
                n_x,
                ..
            } => Ok((snap(p.t, h_t, n_t), snap(p.x + half_width, h_x, n_x - 1))),
            _ => Err(PilrError::InvalidParameter(format!(
                "{} has no grid cells",
                self.family_name()
            ))),
        }
    }

    pub fn check_domain(&self, p: Point) -> Result<()> {
        if p.is_finite() && self.domain().contains(p) {
            Ok(())
        } else {
            Err(PilrError::OutOfDomain { x: p.x, t: p.t })
        }
    }

    /// Write the `order` partial derivative of every basis function at `p` into `out`.
    pub fn fill_row(&self, p: Point, order: Deriv, out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(out.len(), self.d);
        if order.order() > 2 {
            return Err(PilrError::UnsupportedOrder {
                family: self.family_name(),
                order: order.order(),
            });
        }
        self.check_domain(p)?;
        match &self.family {
            Family::Fourier1D { period, freqs } => {
                if order.t > 0 {
                    out.fill(0.0);
                    return Ok(());
                }
                out[0] = if order.x == 0 { 1.0 } else { 0.0 };
                for (i, &j) in freqs.iter().enumerate() {
                    let a = 2.0 * PI * j as f64 / period;
                    out[2 * i + 1] = trig_deriv(false, a, p.x, order.x);
                    out[2 * i + 2] = trig_deriv(true, a, p.x, order.x);
                }
            }
            Family::DiffusionTensor {
                half_width,
                c,
                d_x,
                d_t,
                ..
            } => {
                out[0] = if order.order() == 0 { 1.0 } else { 0.0 };
                let mut col = 1;
                for j in 1..=*d_x {
                    let a = j as f64 * PI / half_width;
                    for jt in 1..=*d_t {
                        let w = jt as f64 * PI / half_width;
                        let rate = -c * w * w;
                        let time = rate.powi(order.t as i32) * (rate * p.t).exp();
                        out[col] = trig_deriv(false, a, p.x, order.x) * time;
                        out[col + 1] = trig_deriv(true, a, p.x, order.x) * time;
                        col += 2;
                    }
                }
            }
            Family::GridIndicator1D { .. } | Family::GridIndicator2D { .. } => {
                if order.order() > 0 {
                    return Err(PilrError::UnsupportedOrder {
                        family: self.family_name(),
                        order: order.order(),
                    });
                }
                out.fill(0.0);
                out[self.indicator_index(p)?] = 1.0;
            }
        }
        Ok(())
    }

    fn indicator_index(&self, p: Point) -> Result<usize> {
        let (tau, j) = self.grid_cell(p)?;
        let n_x = self.grid_shape().map_or(1, |s| s.1);
        Ok(tau * n_x + j)
    }

    /// Basis vector `phi(p)`.
    pub fn eval(&self, p: Point) -> Result<Vec<f64>> {
        let mut row = vec![0.0; self.d];
        self.fill_row(p, Deriv::VALUE, &mut row)?;
        Ok(row)
    }

    /// Nonzero entries of `phi(p)`; a single entry for indicator families.
    pub fn eval_sparse(&self, p: Point) -> Result<Vec<(usize, f64)>> {
        if self.is_grid() {
            return Ok(vec![(self.indicator_index(p)?, 1.0)]);
        }
        Ok(self
            .eval(p)?
            .into_iter()
            .enumerate()
            .filter(|&(_, v)| v != 0.0)
            .collect())
    }

    /// Matrix of partial derivatives: entry `(o, j)` is `orders[o]` applied to `phi_j` at `p`.
    pub fn eval_jet(&self, p: Point, orders: &[Deriv]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(orders.len(), self.d);
        let mut row = vec![0.0; self.d];
        for (o, &order) in orders.iter().enumerate() {
            self.fill_row(p, order, &mut row)?;
            for (j, &v) in row.iter().enumerate() {
                m[(o, j)] = v;
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fourier(d_t: usize) -> BasisSet {
        make_basis(&BasisSpec::Fourier1D {
            period: 2.0 * PI,
            d_t,
            omit_fundamental: false,
        })
        .unwrap()
    }

    #[test]
    fn family_sizes() {
        let b = fourier(16);
        assert_eq!(b.d(), 33);
        assert_eq!(b.eval(Point::line(1.3)).unwrap()[0], 1.0);
        assert_relative_eq!(b.eval(Point::line(0.7)).unwrap()[1], 0.7f64.cos());

        let dt = make_basis(&BasisSpec::DiffusionTensor {
            half_width: PI,
            horizon: 2.0 * PI,
            c: 1.0,
            d_x: 10,
            d_t: 2,
        })
        .unwrap();
        assert_eq!(dt.d(), 41);

        let g1 = make_basis(&BasisSpec::GridIndicator1D {
            extent: 1.0,
            step: 0.01,
        })
        .unwrap();
        assert_eq!(g1.d(), 100);

        let g2 = make_basis(&BasisSpec::GridIndicator2D {
            half_width: 1.0,
            horizon: 1.0,
            h_t: 1.0 / 400.0,
            h_x: 0.2,
        })
        .unwrap();
        assert_eq!(g2.d(), 4010);
    }

    #[test]
    fn fourier_values_and_second_derivative() {
        let b = fourier(1);
        assert_eq!(b.eval(Point::line(0.0)).unwrap(), vec![1.0, 1.0, 0.0]);
        let v = b.eval(Point::line(PI / 2.0)).unwrap();
        assert_relative_eq!(v[0], 1.0);
        assert!(v[1].abs() < 1e-15);
        assert_relative_eq!(v[2], 1.0);
        let jet = b.eval_jet(Point::line(0.0), &[Deriv::DXX]).unwrap();
        assert_eq!(jet.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, -1.0, 0.0]);
    }

    #[test]
    fn misspecified_basis_keeps_size_and_drops_fundamental() {
        let b = make_basis(&BasisSpec::Fourier1D {
            period: 2.0 * PI,
            d_t: 8,
            omit_fundamental: true,
        })
        .unwrap();
        assert_eq!(b.d(), 17);
        assert!(b.is_misspecified());
        let freqs = b.fourier_frequencies().unwrap();
        assert_relative_eq!(freqs[0], 2.0);
        assert_relative_eq!(freqs[7], 9.0);
    }

    #[test]
    fn diffusion_time_derivative_matches_finite_difference() {
        let b = make_basis(&BasisSpec::DiffusionTensor {
            half_width: PI,
            horizon: 2.0 * PI,
            c: 1.0,
            d_x: 1,
            d_t: 1,
        })
        .unwrap();
        let p = Point::new(0.0, 0.0);
        let analytic = b.eval_jet(p, &[Deriv::DT]).unwrap();
        assert_relative_eq!(analytic[(0, 1)], -1.0);
        // Central difference needs room on both sides of t = 0; use t = 1e-5 shifted stencil.
        let step = 1e-5;
        let p0 = Point::new(0.0, step);
        let up = b.eval(Point::new(0.0, 2.0 * step)).unwrap()[1];
        let down = b.eval(Point::new(0.0, 0.0)).unwrap()[1];
        let fd = (up - down) / (2.0 * step);
        let at_p0 = b.eval_jet(p0, &[Deriv::DT]).unwrap()[(0, 1)];
        assert!((fd - at_p0).abs() < 1e-8);
    }

    #[test]
    fn second_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let step = 1e-5;
        let b = fourier(4);
        for _ in 0..100 {
            let x = rng.random_range(0.1..2.0 * PI - 0.1);
            let exact = b.eval_jet(Point::line(x), &[Deriv::DXX]).unwrap();
            let up = b.eval(Point::line(x + step)).unwrap();
            let mid = b.eval(Point::line(x)).unwrap();
            let down = b.eval(Point::line(x - step)).unwrap();
            for j in 0..b.d() {
                let fd = (up[j] - 2.0 * mid[j] + down[j]) / (step * step);
                let scale = exact[(0, j)].abs().max(1.0);
                assert!((fd - exact[(0, j)]).abs() / scale < 1e-4, "col {j}: {fd} vs {}", exact[(0, j)]);
            }
        }
    }

    #[test]
    fn fourier_columns_are_orthogonal() {
        let b = fourier(4);
        let nodes = 4096;
        let t = 2.0 * PI;
        let h = t / (nodes - 1) as f64;
        let rows: Vec<Vec<f64>> = (0..nodes)
            .map(|i| b.eval(Point::line((i as f64 * h).min(t))).unwrap())
            .collect();
        for i in 0..b.d() {
            for j in (i + 1)..b.d() {
                let mut acc = 0.0;
                for (q, r) in rows.iter().enumerate() {
                    let w = if q == 0 || q == nodes - 1 { 0.5 } else { 1.0 };
                    acc += w * r[i] * r[j];
                }
                assert!((acc * h).abs() < 1e-8 * t, "({i},{j}) -> {}", acc * h);
            }
        }
    }

    #[test]
    fn indicator_cells_partition_domain() {
        let b = make_basis(&BasisSpec::GridIndicator1D {
            extent: 1.0,
            step: 0.25,
        })
        .unwrap();
        assert_eq!(b.eval(Point::line(0.0)).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(b.eval(Point::line(0.25)).unwrap(), vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(b.eval(Point::line(1.0)).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            b.eval_jet(Point::line(0.5), &[Deriv::DX]),
            Err(PilrError::UnsupportedOrder { .. })
        ));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(
            make_basis(&BasisSpec::GridIndicator1D {
                extent: 1.0,
                step: 0.3
            }),
            Err(PilrError::InconsistentGrid { .. })
        ));
        assert!(matches!(
            make_basis(&BasisSpec::Fourier1D {
                period: -1.0,
                d_t: 2,
                omit_fundamental: false
            }),
            Err(PilrError::InvalidExtent { .. })
        ));
        let b = fourier(2);
        assert!(matches!(
            b.eval(Point::line(7.0)),
            Err(PilrError::OutOfDomain { .. })
        ));
    }
}
