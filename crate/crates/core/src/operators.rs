//! Differential and difference operators acting on a jet `(u, u_t, u_x, u_xx)`.
//!
//! Continuous operators read the jet from analytic basis derivatives. Discrete
//! operators read it from a forward-in-time stencil on an indicator grid:
//! `u_t = (u[tau+1] - u[tau]) / h_t`, and in space a periodic central stencil
//! `u_xx = (u[j+1] - 2 u[j] + u[j-1]) / h_x^2`.
//!
//! For one-dimensional Fourier bases the `u_xx` slot carries the second
//! derivative in the single coordinate.

use crate::basis::{BasisSet, Deriv, Family, Point};
use crate::error::{PilrError, Result};

/// `(u, u_t, u_x, u_xx)`.
pub type Jet = [f64; 4];

const U: usize = 0;
const UT: usize = 1;
const UX: usize = 2;
const UXX: usize = 3;

/// State-dependent diffusion coefficient of the discrete diffusion operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coefficient {
    Const(f64),
    /// `c(u) = a / (1 + u^2)`.
    Saturating(f64),
}

impl Coefficient {
    pub fn value(&self, u: f64) -> f64 {
        match *self {
            Coefficient::Const(c) => c,
            Coefficient::Saturating(a) => a / (1.0 + u * u),
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            Coefficient::Const(_) => 0.0,
            Coefficient::Saturating(a) => {
                let s = 1.0 + u * u;
                -2.0 * a * u / (s * s)
            }
        }
    }

    /// `sup_u |c(u)|`.
    pub fn sup(&self) -> f64 {
        match *self {
            Coefficient::Const(c) => c.abs(),
            Coefficient::Saturating(a) => a.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Operator {
    /// `D[f] = f`; used for projections and tests.
    Identity,
    /// `u'' + (k_s / m_s) u`.
    HarmonicOscillator { spring: f64, mass: f64 },
    /// `u_t - c u_xx`.
    Diffusion { c: f64 },
    /// `(y[tau+1] - y[tau]) / h + P y[tau] - Q y[tau]^rho`.
    Bernoulli { p: f64, q: f64, rho: u32, h: f64 },
    /// `(u[tau+1] - u[tau]) / h_t - c(u) (u[j+1] - 2u[j] + u[j-1]) / h_x^2`.
    FdmDiffusion {
        coef: Coefficient,
        h_t: f64,
        h_x: f64,
    },
}

/// Where an operator is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Location {
    Point(Point),
    /// Grid node `(tau, j)`; `j = 0` on one-dimensional grids.
    Node { tau: usize, j: usize },
}

/// The jet at one location as four sparse linear functionals of the weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JetMap {
    pub slots: [Vec<(usize, f64)>; 4],
}

impl JetMap {
    pub fn apply(&self, w: &[f64]) -> Jet {
        let mut jet = [0.0; 4];
        for (s, slot) in self.slots.iter().enumerate() {
            jet[s] = slot.iter().map(|&(j, c)| c * w[j]).sum();
        }
        jet
    }

    /// Add `scale * sum_s partials[s] * slot_s` into `out` (dense, length d).
    pub fn accumulate_dense(&self, partials: &Jet, scale: f64, out: &mut [f64]) {
        for (s, slot) in self.slots.iter().enumerate() {
            let f = scale * partials[s];
            if f == 0.0 {
                continue;
            }
            for &(j, c) in slot {
                out[j] += f * c;
            }
        }
    }

    /// Append `scale * sum_s partials[s] * slot_s` as unmerged sparse entries.
    pub fn accumulate_sparse(&self, partials: &Jet, scale: f64, out: &mut Vec<(usize, f64)>) {
        for (s, slot) in self.slots.iter().enumerate() {
            let f = scale * partials[s];
            if f == 0.0 {
                continue;
            }
            out.extend(slot.iter().map(|&(j, c)| (j, f * c)));
        }
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

impl Operator {
    pub fn name(&self) -> &'static str {
        match self {
            Operator::Identity => "identity",
            Operator::HarmonicOscillator { .. } => "harmonic-oscillator",
            Operator::Diffusion { .. } => "diffusion",
            Operator::Bernoulli { .. } => "bernoulli",
            Operator::FdmDiffusion { .. } => "fdm-diffusion",
        }
    }

    pub fn is_linear(&self) -> bool {
        match *self {
            Operator::Bernoulli { q, .. } => q == 0.0,
            Operator::FdmDiffusion { coef, .. } => matches!(coef, Coefficient::Const(_)),
            _ => true,
        }
    }

    /// Whether the operator is a forward-in-time difference scheme.
    pub fn is_discrete(&self) -> bool {
        matches!(
            self,
            Operator::Bernoulli { .. } | Operator::FdmDiffusion { .. }
        )
    }

    /// Value and analytic partials `d(value)/d(jet slot)`.
    pub fn apply_jet_partials(&self, jet: Jet) -> (f64, Jet) {
        let [u, u_t, _u_x, u_xx] = jet;
        match *self {
            Operator::Identity => (u, [1.0, 0.0, 0.0, 0.0]),
            Operator::HarmonicOscillator { spring, mass } => {
                let k = spring / mass;
                (u_xx + k * u, [k, 0.0, 0.0, 1.0])
            }
            Operator::Diffusion { c } => (u_t - c * u_xx, [0.0, 1.0, 0.0, -c]),
            Operator::Bernoulli { p, q, rho, .. } => {
                let power = u.powi(rho as i32);
                let dpower = if rho == 0 {
                    0.0
                } else {
                    rho as f64 * u.powi(rho as i32 - 1)
                };
                (u_t + p * u - q * power, [p - q * dpower, 1.0, 0.0, 0.0])
            }
            Operator::FdmDiffusion { coef, .. } => {
                let c = coef.value(u);
                (
                    u_t - c * u_xx,
                    [-coef.derivative(u) * u_xx, 1.0, 0.0, -c],
                )
            }
        }
    }

    /// Linear part `L` of `D = L + F`, linearized at `w = 0`.
    pub fn linear_part(&self) -> Operator {
        match *self {
            Operator::Bernoulli { p, h, .. } => Operator::Bernoulli {
                p,
                q: 0.0,
                rho: 0,
                h,
            },
            Operator::FdmDiffusion { coef, h_t, h_x } => Operator::FdmDiffusion {
                coef: Coefficient::Const(coef.value(0.0)),
                h_t,
                h_x,
            },
            other => other,
        }
    }

    fn mismatch(&self, basis: &BasisSet, reason: impl Into<String>) -> PilrError {
        PilrError::BasisOperatorMismatch {
            op: self.name(),
            family: basis.family_name(),
            reason: reason.into(),
        }
    }

    /// Check that the operator can act on `basis`.
    pub fn check_basis(&self, basis: &BasisSet) -> Result<()> {
        match (*self, basis.family()) {
            (Operator::Identity, _) => Ok(()),
            (Operator::HarmonicOscillator { .. }, Family::Fourier1D { .. }) => Ok(()),
            (Operator::Diffusion { .. }, Family::DiffusionTensor { .. }) => Ok(()),
            (Operator::Bernoulli { h, .. }, Family::GridIndicator1D { step, .. }) => {
                if close(h, *step) {
                    Ok(())
                } else {
                    Err(self.mismatch(basis, format!("step {h} differs from grid step {step}")))
                }
            }
            (
                Operator::FdmDiffusion { h_t, h_x, .. },
                Family::GridIndicator2D {
                    h_t: gt, h_x: gx, ..
                },
            ) => {
                if close(h_t, *gt) && close(h_x, *gx) {
                    Ok(())
                } else {
                    Err(self.mismatch(
                        basis,
                        format!("steps ({h_t}, {h_x}) differ from grid ({gt}, {gx})"),
                    ))
                }
            }
            _ => Err(self.mismatch(basis, "unsupported pairing")),
        }
    }

    /// Linear functionals producing the jet at `loc`.
    pub fn jet_map(&self, basis: &BasisSet, loc: Location) -> Result<JetMap> {
        self.check_basis(basis)?;
        if basis.is_grid() {
            let (tau, j) = match loc {
                Location::Node { tau, j } => (tau, j),
                Location::Point(p) => basis.grid_cell(p)?,
            };
            return self.grid_jet(basis, tau, j);
        }
        let p = match loc {
            Location::Point(p) => p,
            Location::Node { .. } => {
                return Err(self.mismatch(basis, "grid index on a continuous basis"))
            }
        };
        let d = basis.d();
        let mut map = JetMap::default();
        let mut row = vec![0.0; d];
        let orders = [Deriv::VALUE, Deriv::DT, Deriv::DX, Deriv::DXX];
        let partials = self.apply_jet_partials([0.0; 4]).1;
        for (s, order) in orders.into_iter().enumerate() {
            // Skip slots the operator never reads when it is linear.
            if self.is_linear() && partials[s] == 0.0 {
                continue;
            }
            basis.fill_row(p, order, &mut row)?;
            map.slots[s] = row
                .iter()
                .enumerate()
                .filter(|&(_, &v)| v != 0.0)
                .map(|(j, &v)| (j, v))
                .collect();
        }
        Ok(map)
    }

    fn grid_jet(&self, basis: &BasisSet, tau: usize, j: usize) -> Result<JetMap> {
        let (rows, n_x) = basis
            .grid_shape()
            .expect("grid bases always report a shape");
        let needs_forward = self.is_discrete();
        let limit = if needs_forward { rows - 1 } else { rows };
        if tau >= limit {
            return Err(PilrError::GridIndexOutOfRange { index: tau, limit });
        }
        let j = j % n_x;
        let idx = |tau: usize, j: usize| tau * n_x + j;
        let mut map = JetMap::default();
        map.slots[U] = vec![(idx(tau, j), 1.0)];
        match *self {
            Operator::Bernoulli { h, .. } => {
                map.slots[UT] = vec![(idx(tau + 1, j), 1.0 / h), (idx(tau, j), -1.0 / h)];
            }
            Operator::FdmDiffusion { h_t, h_x, .. } => {
                let jp = (j + 1) % n_x;
                let jm = (j + n_x - 1) % n_x;
                map.slots[UT] = vec![(idx(tau + 1, j), 1.0 / h_t), (idx(tau, j), -1.0 / h_t)];
                map.slots[UX] = vec![
                    (idx(tau, jp), 0.5 / h_x),
                    (idx(tau, jm), -0.5 / h_x),
                ];
                let inv = 1.0 / (h_x * h_x);
                map.slots[UXX] = vec![
                    (idx(tau, jp), inv),
                    (idx(tau, j), -2.0 * inv),
                    (idx(tau, jm), inv),
                ];
            }
            _ => {}
        }
        Ok(map)
    }

    /// `D[w . phi]` at `loc`: pointwise for continuous operators, the stencil
    /// residual at a grid node for discrete ones.
    pub fn apply(&self, basis: &BasisSet, w: &[f64], loc: Location) -> Result<f64> {
        if w.len() != basis.d() {
            return Err(PilrError::DimensionMismatch {
                expected: basis.d(),
                found: w.len(),
            });
        }
        let jet = self.jet_map(basis, loc)?.apply(w);
        Ok(self.apply_jet_partials(jet).0)
    }
}
