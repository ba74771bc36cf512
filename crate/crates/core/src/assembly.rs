//! Unified residual form: pairings `<D[f], psi_k>_{mu_k}`, the constraint matrix
//! `D`, the trial Gram matrix `T`, and the residual map `p(w)` with its Jacobian.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::basis::{BasisSet, Point};
use crate::error::{PilrError, Result};
use crate::linalg::SparseMatrix;
use crate::operators::{JetMap, Location, Operator};
use crate::trials::{Measure, Trial, TrialSet};

/// `<field, psi>_mu`: point evaluation for Dirac measures, composite trapezoid
/// quadrature over the box for Lebesgue measures.
pub fn pair(field: impl Fn(Point) -> f64, trial: &Trial) -> Result<f64> {
    let mut acc = 0.0;
    for (p, weight) in trial.measure.nodes() {
        let v = field(p);
        if !v.is_finite() {
            return Err(PilrError::NonFiniteField { x: p.x, t: p.t });
        }
        acc += weight * trial.psi.eval(p) * v;
    }
    Ok(acc)
}

/// Gram matrix of the trial functions.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialGram {
    /// Dirac trials: `T_kk' = delta_kk' psi_k(x_k)^2`.
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl TrialGram {
    pub fn dim(&self) -> usize {
        match self {
            TrialGram::Diagonal(v) => v.len(),
            TrialGram::Dense(m) => m.nrows(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            TrialGram::Diagonal(v) => DMatrix::from_diagonal(&nalgebra::DVector::from_vec(v.clone())),
            TrialGram::Dense(m) => m.clone(),
        }
    }

    /// Leading `k x k` block.
    pub fn truncated(&self, k: usize) -> TrialGram {
        match self {
            TrialGram::Diagonal(v) => TrialGram::Diagonal(v[..k.min(v.len())].to_vec()),
            TrialGram::Dense(m) => {
                let k = k.min(m.nrows());
                TrialGram::Dense(m.view((0, 0), (k, k)).into_owned())
            }
        }
    }

    /// `D^T T D`.
    pub fn weighted_gram(&self, d: &SparseMatrix) -> Result<SparseMatrix> {
        if d.nrows() != self.dim() {
            return Err(PilrError::DimensionMismatch {
                expected: self.dim(),
                found: d.nrows(),
            });
        }
        match self {
            TrialGram::Diagonal(t) => {
                let rows = d
                    .rows()
                    .zip(t)
                    .map(|((idx, val), &tk)| {
                        let s = tk.max(0.0).sqrt();
                        idx.iter().zip(val).map(|(&j, &v)| (j, s * v)).collect()
                    })
                    .collect();
                Ok(SparseMatrix::from_rows(d.ncols(), rows).gram())
            }
            TrialGram::Dense(t) => {
                let dd = d.to_dense();
                Ok(SparseMatrix::from_dense(&(dd.transpose() * t * &dd)))
            }
        }
    }
}

/// Gram matrix `T` of a trial set (all Dirac or all Lebesgue).
pub fn assemble_t(trials: &TrialSet) -> Result<TrialGram> {
    let pairs = trials.pairs();
    if trials.all_dirac() {
        let diag = pairs
            .iter()
            .map(|tr| match tr.measure {
                Measure::Dirac(p) => tr.psi.eval(p).powi(2),
                Measure::Lebesgue(_) => unreachable!(),
            })
            .collect();
        return Ok(TrialGram::Diagonal(diag));
    }
    if pairs.iter().any(|t| matches!(t.measure, Measure::Dirac(_))) {
        return Err(PilrError::MixedMeasures);
    }
    let groups = group_by_measure(pairs);
    let k = pairs.len();
    let mut t = DMatrix::zeros(k, k);
    for (ga, (ma, ia)) in groups.iter().enumerate() {
        for (mb, ib) in &groups[ga..] {
            let (Measure::Lebesgue(ba), Measure::Lebesgue(bb)) = (ma, mb) else {
                unreachable!()
            };
            let Some(inter) = ba.intersect(bb) else { continue };
            let mut block = DMatrix::<f64>::zeros(ia.len(), ib.len());
            let mut va = vec![0.0; ia.len()];
            let mut vb = vec![0.0; ib.len()];
            for (p, w) in inter.nodes() {
                for (slot, &i) in va.iter_mut().zip(ia) {
                    *slot = pairs[i].psi.eval(p);
                }
                for (slot, &i) in vb.iter_mut().zip(ib) {
                    *slot = w * pairs[i].psi.eval(p);
                }
                for (r, &a) in va.iter().enumerate() {
                    for (c, &b) in vb.iter().enumerate() {
                        block[(r, c)] += a * b;
                    }
                }
            }
            for (r, &i) in ia.iter().enumerate() {
                for (c, &j) in ib.iter().enumerate() {
                    t[(i, j)] = block[(r, c)];
                    t[(j, i)] = block[(r, c)];
                }
            }
        }
    }
    Ok(TrialGram::Dense(t))
}

/// Consecutive trials sharing one measure, as `(measure, trial indices)`.
fn group_by_measure(pairs: &[Trial]) -> Vec<(Measure, Vec<usize>)> {
    let mut groups: Vec<(Measure, Vec<usize>)> = Vec::new();
    for (k, tr) in pairs.iter().enumerate() {
        match groups.last_mut() {
            Some((m, idx)) if *m == tr.measure => idx.push(k),
            _ => groups.push((tr.measure, vec![k])),
        }
    }
    groups
}

#[derive(Debug, Clone)]
enum Form {
    Linear(SparseMatrix),
    Nonlinear,
}

/// Residual map `p: R^d -> R^K` bound to an operator, basis and trial set.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    op: Operator,
    basis: BasisSet,
    trials: TrialSet,
    groups: Vec<(Measure, Vec<usize>)>,
    /// Cached jet maps for Dirac trials, one per trial.
    dirac_jets: Option<Vec<JetMap>>,
    form: Form,
}

struct Evaluation {
    values: Vec<f64>,
    rows: Option<Vec<Vec<(usize, f64)>>>,
}

impl ConstraintSystem {
    pub fn new(op: Operator, basis: BasisSet, trials: TrialSet) -> Result<Self> {
        op.check_basis(&basis)?;
        for tr in trials.pairs() {
            match tr.measure {
                Measure::Dirac(p) => basis.check_domain(p)?,
                Measure::Lebesgue(b) => {
                    basis.check_domain(Point::new(b.x.0, b.t.map_or(0.0, |t| t.0)))?;
                    basis.check_domain(Point::new(b.x.1, b.t.map_or(0.0, |t| t.1)))?;
                }
            }
        }
        let dirac_jets = if trials.all_dirac() {
            Some(
                trials
                    .pairs()
                    .par_iter()
                    .map(|tr| match tr.measure {
                        Measure::Dirac(p) => op.jet_map(&basis, Location::Point(p)),
                        Measure::Lebesgue(_) => unreachable!(),
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        let mut cs = Self {
            groups: group_by_measure(trials.pairs()),
            op,
            basis,
            trials,
            dirac_jets,
            form: Form::Nonlinear,
        };
        if op.is_linear() {
            let zero = vec![0.0; cs.d()];
            let rows = cs.evaluate(&zero, true)?.rows.expect("rows requested");
            cs.form = Form::Linear(SparseMatrix::from_rows(cs.d(), rows));
        }
        Ok(cs)
    }

    pub fn k(&self) -> usize {
        self.trials.len()
    }

    pub fn d(&self) -> usize {
        self.basis.d()
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn trials(&self) -> &TrialSet {
        &self.trials
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.form, Form::Linear(_))
    }

    /// The constant constraint matrix `D` of a linear system.
    pub fn matrix(&self) -> Option<&SparseMatrix> {
        match &self.form {
            Form::Linear(d) => Some(d),
            Form::Nonlinear => None,
        }
    }

    /// System restricted to the first `k` trial pairs.
    pub fn truncated(&self, k: usize) -> Result<ConstraintSystem> {
        let k = k.min(self.k());
        let trials = self.trials.truncated(k);
        Ok(ConstraintSystem {
            groups: group_by_measure(trials.pairs()),
            op: self.op,
            basis: self.basis.clone(),
            dirac_jets: self.dirac_jets.as_ref().map(|j| j[..k].to_vec()),
            form: match &self.form {
                Form::Linear(d) => Form::Linear(d.top_rows(k)),
                Form::Nonlinear => Form::Nonlinear,
            },
            trials,
        })
    }

    fn check_len(&self, w: &[f64]) -> Result<()> {
        if w.len() == self.d() {
            Ok(())
        } else {
            Err(PilrError::DimensionMismatch {
                expected: self.d(),
                found: w.len(),
            })
        }
    }

    fn evaluate(&self, w: &[f64], with_rows: bool) -> Result<Evaluation> {
        let d = self.d();
        let sparse_rows = self.basis.is_grid();
        if let Some(jets) = &self.dirac_jets {
            let per_trial: Vec<(f64, Vec<(usize, f64)>)> = jets
                .par_iter()
                .zip(self.trials.pairs())
                .map(|(jm, tr)| {
                    let Measure::Dirac(p) = tr.measure else {
                        unreachable!()
                    };
                    let (f, partials) = self.op.apply_jet_partials(jm.apply(w));
                    if !f.is_finite() {
                        return Err(PilrError::NonFiniteField { x: p.x, t: p.t });
                    }
                    let scale = tr.psi.eval(p);
                    let mut row = Vec::new();
                    if with_rows {
                        jm.accumulate_sparse(&partials, scale, &mut row);
                    }
                    Ok((scale * f, row))
                })
                .collect::<Result<_>>()?;
            let (values, rows): (Vec<f64>, Vec<_>) = per_trial.into_iter().unzip();
            return Ok(Evaluation {
                values,
                rows: with_rows.then_some(rows),
            });
        }

        let pairs = self.trials.pairs();
        let per_group: Vec<Vec<(usize, f64, Vec<(usize, f64)>)>> = self
            .groups
            .par_iter()
            .map(|(measure, members)| {
                let mut values = vec![0.0; members.len()];
                let mut dense: Vec<Vec<f64>> = if with_rows && !sparse_rows {
                    vec![vec![0.0; d]; members.len()]
                } else {
                    Vec::new()
                };
                let mut sparse: Vec<Vec<(usize, f64)>> = vec![Vec::new(); members.len()];
                for (p, weight) in measure.nodes() {
                    let jm = self.op.jet_map(&self.basis, Location::Point(p))?;
                    let (f, partials) = self.op.apply_jet_partials(jm.apply(w));
                    if !f.is_finite() {
                        return Err(PilrError::NonFiniteField { x: p.x, t: p.t });
                    }
                    for (m, &k) in members.iter().enumerate() {
                        let s = weight * pairs[k].psi.eval(p);
                        values[m] += s * f;
                        if with_rows {
                            if sparse_rows {
                                jm.accumulate_sparse(&partials, s, &mut sparse[m]);
                            } else {
                                jm.accumulate_dense(&partials, s, &mut dense[m]);
                            }
                        }
                    }
                }
                Ok(members
                    .iter()
                    .enumerate()
                    .map(|(m, &k)| {
                        let row = if !with_rows {
                            Vec::new()
                        } else if sparse_rows {
                            std::mem::take(&mut sparse[m])
                        } else {
                            dense[m]
                                .iter()
                                .enumerate()
                                .filter(|&(_, &v)| v != 0.0)
                                .map(|(j, &v)| (j, v))
                                .collect()
                        };
                        (k, values[m], row)
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        let mut values = vec![0.0; self.k()];
        let mut rows = vec![Vec::new(); if with_rows { self.k() } else { 0 }];
        for (k, v, row) in per_group.into_iter().flatten() {
            values[k] = v;
            if with_rows {
                rows[k] = row;
            }
        }
        Ok(Evaluation {
            values,
            rows: with_rows.then_some(rows),
        })
    }

    /// `p(w)`, one entry per trial pair.
    pub fn residual(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_len(w)?;
        match &self.form {
            Form::Linear(d) => Ok(d.mul_vec(w)),
            Form::Nonlinear => Ok(self.evaluate(w, false)?.values),
        }
    }

    /// Jacobian of `p` at `w` (the constant `D` for linear systems).
    pub fn jacobian(&self, w: &[f64]) -> Result<SparseMatrix> {
        self.check_len(w)?;
        match &self.form {
            Form::Linear(d) => Ok(d.clone()),
            Form::Nonlinear => {
                let rows = self.evaluate(w, true)?.rows.expect("rows requested");
                Ok(SparseMatrix::from_rows(self.d(), rows))
            }
        }
    }

    /// `(p(w), J(w)^T p(w))`.
    pub fn residual_vjp(&self, w: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_len(w)?;
        match &self.form {
            Form::Linear(d) => {
                let p = d.mul_vec(w);
                let g = d.tr_mul_vec(&p);
                Ok((p, g))
            }
            Form::Nonlinear => {
                let ev = self.evaluate(w, true)?;
                let mut g = vec![0.0; self.d()];
                for (row, &pk) in ev.rows.expect("rows requested").iter().zip(&ev.values) {
                    for &(j, v) in row {
                        g[j] += v * pk;
                    }
                }
                Ok((ev.values, g))
            }
        }
    }
}

/// Constraint matrix `D_kj = <D[phi_j], psi_k>_{mu_k}` of a linear operator.
pub fn assemble_d(op: Operator, basis: &BasisSet, trials: &TrialSet) -> Result<SparseMatrix> {
    if !op.is_linear() {
        return Err(PilrError::NonlinearOperator);
    }
    let cs = ConstraintSystem::new(op, basis.clone(), trials.clone())?;
    Ok(cs.matrix().expect("linear operator").clone())
}
