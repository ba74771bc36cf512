use thiserror::Error;

/// Errors raised by the regression toolkit.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum PilrError {
    #[error("invalid extent: {name} must be positive, got {value}")]
    InvalidExtent { name: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("inconsistent grid: step {step} does not divide extent {extent}")]
    InconsistentGrid { step: f64, extent: f64 },

    #[error("derivative order {order} is not supported by the {family} family")]
    UnsupportedOrder { family: &'static str, order: u8 },

    #[error("point ({x}, {t}) lies outside the basis domain")]
    OutOfDomain { x: f64, t: f64 },

    #[error("cannot sample Dirac trials from an empty point pool")]
    EmptyPointPool,

    #[error("operator {op} cannot act on a {family} basis: {reason}")]
    BasisOperatorMismatch {
        op: &'static str,
        family: &'static str,
        reason: String,
    },

    #[error("grid index {index} is out of range (valid 0..{limit})")]
    GridIndexOutOfRange { index: usize, limit: usize },

    #[error("non-finite value at quadrature node ({x}, {t})")]
    NonFiniteField { x: f64, t: f64 },

    #[error("operator is nonlinear; use the nonlinear residual map instead of a constant matrix")]
    NonlinearOperator,

    #[error("trial set mixes Dirac and Lebesgue measures")]
    MixedMeasures,

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("linear system is singular")]
    SingularSystem,

    #[error("matrix contains non-finite entries")]
    NonFiniteMatrix,

    #[error("at least one sample point is required")]
    EmptySample,

    #[error("projected solution violates the residual check (|p|_inf = {residual:.3e}, limit {limit:.3e})")]
    ProjectionFailure { residual: f64, limit: f64 },

    #[error("explicit scheme is unstable: c*h_t/h_x^2 = {ratio:.4} exceeds 1/2")]
    UnstableScheme { ratio: f64 },

    #[error("nonlinear rollout overflowed at step {step}")]
    Overflow { step: usize },

    #[error("dataset of {n} points is too small for the requested split")]
    SplitTooSmall { n: usize },

    #[error("every hyperparameter candidate diverged ({candidates} tried)")]
    AllCandidatesDiverged { candidates: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, PilrError>;
