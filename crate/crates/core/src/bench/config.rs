//! TOML experiment configuration and its expansion into sweep cells.

use serde::Deserialize;
use std::f64::consts::PI;
use std::path::Path;

use crate::basis::BasisSpec;
use crate::datagen::{EquationSpec, SplitSizes};
use crate::error::{PilrError, Result};
use crate::operators::Coefficient;
use crate::solvers::OptimizerConfig;
use crate::trials::{TrialSpec, DEFAULT_NODES_1D, DEFAULT_NODES_2D};

fn default_seeds() -> usize {
    10
}
fn default_noise() -> f64 {
    0.01
}
fn default_methods() -> Vec<Method> {
    vec![Method::Ridge, Method::Pilr]
}
fn one() -> f64 {
    1.0
}
fn two_pi() -> f64 {
    2.0 * PI
}
fn pi() -> f64 {
    PI
}
fn default_j_max() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ridge,
    Pilr,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Ridge => "RR",
            Method::Pilr => "PILR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EquationConfig {
    HarmonicOscillator {
        #[serde(default = "one")]
        spring: f64,
        #[serde(default = "one")]
        mass: f64,
        #[serde(default = "two_pi")]
        period: f64,
    },
    Diffusion {
        #[serde(default = "one")]
        c: f64,
        #[serde(default = "pi")]
        half_width: f64,
        #[serde(default = "two_pi")]
        horizon: f64,
        #[serde(default = "default_j_max")]
        j_max: usize,
    },
    Bernoulli {
        #[serde(default = "one")]
        p: f64,
        #[serde(default)]
        q: f64,
        #[serde(default)]
        rho: u32,
        #[serde(default)]
        h: Option<f64>,
        #[serde(default = "one")]
        horizon: f64,
    },
    FdmDiffusion {
        /// Constant diffusivity, or the amplitude `a` of `a / (1 + u^2)`.
        #[serde(default = "one")]
        c: f64,
        #[serde(default)]
        saturating: bool,
        #[serde(default)]
        h_t: Option<f64>,
        #[serde(default)]
        h_x: Option<f64>,
        #[serde(default = "one")]
        half_width: f64,
        #[serde(default = "one")]
        horizon: f64,
        #[serde(default = "default_j_max")]
        j_max: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    /// Temporal frequency count (oscillator, diffusion tensor).
    pub d_t: Option<usize>,
    /// Spatial frequency count (diffusion tensor).
    pub d_x: Option<usize>,
    #[serde(default)]
    pub omit_fundamental: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TrialConfig {
    DiracUniform {
        count: usize,
        #[serde(default)]
        seed: u64,
    },
    GridNodes {
        #[serde(default)]
        keep: Option<usize>,
        /// Seed of a random node order; omitted means row-major order.
        #[serde(default)]
        order_seed: Option<u64>,
    },
    WeakFourier {
        count: usize,
        #[serde(default)]
        nodes: Option<usize>,
    },
    WeakWindowed {
        windows: usize,
        freqs: usize,
        #[serde(default)]
        nodes: Option<usize>,
    },
}

fn default_n_test() -> usize {
    1000
}
fn default_fractions() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}

/// `n` is the number of training points; the validation share is sized from
/// `fractions` relative to it. Test MSE uses `n_test` fresh noiseless points
/// rather than the test share, so it is measured on a fixed, larger sample.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub n: Option<usize>,
    #[serde(default = "default_fractions")]
    pub fractions: [f64; 3],
    #[serde(default = "default_n_test")]
    pub n_test: usize,
}

fn default_box() -> [f64; 2] {
    [1e-9, 1e-2]
}
fn default_candidates() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default = "default_box")]
    pub xi: [f64; 2],
    #[serde(default = "default_box")]
    pub nu: [f64; 2],
    #[serde(default = "default_candidates")]
    pub candidates: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            xi: default_box(),
            nu: default_box(),
            candidates: default_candidates(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverChoice {
    /// Closed form for linear operators, Adam otherwise.
    #[default]
    Auto,
    ClosedForm,
    Soft,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(default)]
    pub solver: SolverChoice,
    pub lr: Option<f64>,
    pub max_epochs: Option<usize>,
    pub decay: Option<f64>,
    pub patience: Option<usize>,
    /// Start Adam from the closed-form fit of the linear part instead of zero.
    #[serde(default)]
    pub warm_start: bool,
}

impl OptimizerSection {
    pub fn adam(&self) -> OptimizerConfig {
        let base = OptimizerConfig::default();
        OptimizerConfig {
            lr: self.lr.unwrap_or(base.lr),
            max_epochs: self.max_epochs.unwrap_or(base.max_epochs),
            decay: self.decay.unwrap_or(base.decay),
            patience: self.patience.unwrap_or(base.patience),
            ..base
        }
    }
}

/// Lists swept as a cartesian product; an empty list keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub d_t: Vec<usize>,
    #[serde(default)]
    pub d_x: Vec<usize>,
    /// Bernoulli step sizes.
    #[serde(default)]
    pub h: Vec<f64>,
    /// FDM `[h_t, h_x]` pairs.
    #[serde(default)]
    pub steps: Vec<[f64; 2]>,
    #[serde(default)]
    pub n: Vec<usize>,
    /// Number of trial pairs kept.
    #[serde(default)]
    pub keep: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub experiment: String,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_noise")]
    pub noise_var: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Record wall-clock times; off by default so output is reproducible.
    #[serde(default)]
    pub timing: bool,
    pub equation: EquationConfig,
    #[serde(default)]
    pub basis: BasisConfig,
    pub trials: TrialConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub sweep: SweepConfig,
}

/// One fully resolved sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub equation: EquationSpec,
    pub basis: BasisSpec,
    pub trials: TrialSpec,
    /// Configured data size before the split.
    pub n: usize,
    pub sizes: SplitSizes,
}

fn config_err(msg: impl Into<String>) -> PilrError {
    PilrError::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(config_err(format!("{name} must be positive and finite, got {v}")))
    }
}

fn options<T: Clone>(list: &[T], base: Option<T>) -> Vec<Option<T>> {
    if list.is_empty() {
        vec![base]
    } else {
        list.iter().cloned().map(Some).collect()
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: BenchConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PilrError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.experiment.trim().is_empty() {
            return Err(config_err("experiment name is empty"));
        }
        if self.seeds == 0 {
            return Err(config_err("seeds must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(config_err("methods list is empty"));
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(config_err("noise_var must be finite and >= 0"));
        }
        for (name, b) in [("search.xi", self.search.xi), ("search.nu", self.search.nu)] {
            if !(b[0] > 0.0 && b[0] <= b[1] && b[1].is_finite()) {
                return Err(config_err(format!("{name} must satisfy 0 < lo <= hi, got {b:?}")));
            }
        }
        if self.search.candidates == 0 {
            return Err(config_err("search.candidates must be at least 1"));
        }
        // Surface structural errors (missing parameters, bad steps) up front.
        self.cells()?;
        Ok(())
    }

    /// Expand the sweep lists into resolved cells.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let mut out = Vec::new();
        for d_t in options(&self.sweep.d_t, self.basis.d_t) {
            for d_x in options(&self.sweep.d_x, self.basis.d_x) {
                for h in options(&self.sweep.h, self.bernoulli_h()) {
                    let base_steps = self.fdm_steps();
                    for steps in options(&self.sweep.steps, base_steps) {
                        for n in options(&self.sweep.n, self.data.n) {
                            let keep_base = match self.trials {
                                TrialConfig::GridNodes { keep, .. } => keep,
                                _ => None,
                            };
                            for keep in options(&self.sweep.keep, keep_base) {
                                out.push(self.resolve(d_t, d_x, h, steps, n, keep)?);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn bernoulli_h(&self) -> Option<f64> {
        match self.equation {
            EquationConfig::Bernoulli { h, .. } => h,
            _ => None,
        }
    }

    fn fdm_steps(&self) -> Option<[f64; 2]> {
        match self.equation {
            EquationConfig::FdmDiffusion {
                h_t: Some(a),
                h_x: Some(b),
                ..
            } => Some([a, b]),
            _ => None,
        }
    }

    fn resolve(
        &self,
        d_t: Option<usize>,
        d_x: Option<usize>,
        h: Option<f64>,
        steps: Option<[f64; 2]>,
        n: Option<usize>,
        keep: Option<usize>,
    ) -> Result<Cell> {
        let need = |v: Option<usize>, name: &str| v.ok_or_else(|| config_err(format!("{name} is required")));
        let (equation, basis) = match self.equation {
            EquationConfig::HarmonicOscillator {
                spring,
                mass,
                period,
            } => (
                EquationSpec::HarmonicOscillator {
                    spring: positive("spring", spring)?,
                    mass: positive("mass", mass)?,
                    period: positive("period", period)?,
                },
                BasisSpec::Fourier1D {
                    period,
                    d_t: need(d_t, "basis.d_t")?,
                    omit_fundamental: self.basis.omit_fundamental,
                },
            ),
            EquationConfig::Diffusion {
                c,
                half_width,
                horizon,
                j_max,
            } => (
                EquationSpec::Diffusion {
                    c,
                    half_width: positive("half_width", half_width)?,
                    horizon: positive("horizon", horizon)?,
                    j_max,
                },
                BasisSpec::DiffusionTensor {
                    half_width,
                    horizon,
                    c,
                    d_x: need(d_x, "basis.d_x")?,
                    d_t: need(d_t, "basis.d_t")?,
                },
            ),
            EquationConfig::Bernoulli {
                p,
                q,
                rho,
                horizon,
                ..
            } => {
                let h = positive("h", h.ok_or_else(|| config_err("equation.h is required"))?)?;
                (
                    EquationSpec::Bernoulli {
                        p,
                        q,
                        rho,
                        h,
                        horizon: positive("horizon", horizon)?,
                    },
                    BasisSpec::GridIndicator1D { extent: horizon, step: h },
                )
            }
            EquationConfig::FdmDiffusion {
                c,
                saturating,
                half_width,
                horizon,
                j_max,
                ..
            } => {
                let [h_t, h_x] =
                    steps.ok_or_else(|| config_err("equation.h_t and equation.h_x are required"))?;
                let coef = if saturating {
                    Coefficient::Saturating(c)
                } else {
                    Coefficient::Const(c)
                };
                (
                    EquationSpec::FdmDiffusion {
                        coef,
                        h_t: positive("h_t", h_t)?,
                        h_x: positive("h_x", h_x)?,
                        half_width: positive("half_width", half_width)?,
                        horizon: positive("horizon", horizon)?,
                        j_max,
                    },
                    BasisSpec::GridIndicator2D {
                        half_width,
                        horizon,
                        h_t,
                        h_x,
                    },
                )
            }
        };
        let trials = match &self.trials {
            TrialConfig::DiracUniform { count, seed } => TrialSpec::DiracUniform {
                count: *count,
                seed: *seed,
            },
            TrialConfig::GridNodes { order_seed, .. } => TrialSpec::GridNodes {
                keep,
                order_seed: *order_seed,
            },
            TrialConfig::WeakFourier { count, nodes } => {
                let EquationConfig::HarmonicOscillator { period, .. } = self.equation else {
                    return Err(config_err("weak-fourier trials need the harmonic-oscillator equation"));
                };
                TrialSpec::WeakFourier {
                    period,
                    count: *count,
                    nodes: nodes.unwrap_or(DEFAULT_NODES_1D),
                }
            }
            TrialConfig::WeakWindowed { windows, freqs, nodes } => {
                let EquationConfig::Diffusion {
                    half_width,
                    horizon,
                    ..
                } = self.equation
                else {
                    return Err(config_err("weak-windowed trials need the diffusion equation"));
                };
                TrialSpec::WeakWindowedFourier {
                    half_width,
                    horizon,
                    windows: *windows,
                    freqs: *freqs,
                    nodes: nodes.unwrap_or(DEFAULT_NODES_2D),
                }
            }
        };
        let n = n.ok_or_else(|| config_err("data.n is required"))?;
        let split = SplitSizes::from_train(n, self.data.fractions)
            .map_err(|e| config_err(format!("data split: {e}")))?;
        if self.data.n_test == 0 {
            return Err(config_err("data.n_test must be at least 1"));
        }
        let sizes = SplitSizes {
            test: self.data.n_test,
            ..split
        };
        Ok(Cell {
            equation,
            basis,
            trials,
            n,
            sizes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HO: &str = r#"
experiment = "ho-strong"
[equation]
kind = "harmonic-oscillator"
[basis]
d_t = 2
[trials]
kind = "dirac-uniform"
count = 100
[data]
n = 20
[sweep]
d_t = [2, 4, 8, 16]
"#;

    #[test]
    fn parses_with_defaults_and_expands_sweep() {
        let cfg = BenchConfig::from_toml(HO).unwrap();
        assert_eq!(cfg.seeds, 10);
        assert_eq!(cfg.noise_var, 0.01);
        assert_eq!(cfg.search.candidates, 100);
        assert_eq!(cfg.methods, vec![Method::Ridge, Method::Pilr]);
        let cells = cfg.cells().unwrap();
        assert_eq!(cells.len(), 4);
        assert!(matches!(cells[3].basis, BasisSpec::Fourier1D { d_t: 16, .. }));
        assert_eq!(
            cells[0].sizes,
            SplitSizes {
                train: 20,
                val: 7,
                test: 1000
            }
        );
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(
            BenchConfig::from_toml(&HO.replace("n = 20", "")),
            Err(PilrError::Config(_))
        ));
        assert!(BenchConfig::from_toml(&HO.replace("count = 100", "count = 100\nbogus = 1")).is_err());
        assert!(BenchConfig::from_toml(&HO.replace("experiment = \"ho-strong\"", "experiment = \"x\"\nseeds = 0")).is_err());
        assert!(BenchConfig::from_toml("not toml [").is_err());
        assert!(BenchConfig::from_toml(&HO.replace("n = 20", "n = 0")).is_err());
    }

    #[test]
    fn fdm_steps_and_saturating_coefficient() {
        let text = r#"
experiment = "t2"
[equation]
kind = "fdm-diffusion"
saturating = true
c = 0.1
[trials]
kind = "grid-nodes"
[data]
n = 30
[sweep]
steps = [[0.005, 0.2], [0.005, 0.1]]
"#;
        let cells = BenchConfig::from_toml(text).unwrap().cells().unwrap();
        assert_eq!(cells.len(), 2);
        assert!(matches!(
            cells[1].equation,
            EquationSpec::FdmDiffusion { coef: Coefficient::Saturating(a), h_x, .. } if a == 0.1 && h_x == 0.1
        ));
    }
}
