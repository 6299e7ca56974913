use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("layer {layer}: expected input width {expected}, found {found}")]
    LayerDimension {
        layer: usize,
        expected: usize,
        found: usize,
    },

    #[error("loss must be a scalar tensor, found shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(usize),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("infeasible constraint specification: {0}")]
    InfeasibleConstraint(String),

    #[error("negative channel input {value} at index {index}")]
    NegativeInput { index: usize, value: f64 },

    #[error("degenerate chi-square bound: denominator {denominator} <= 0 (chi_pq = {chi_pq}, chi_qp = {chi_qp})")]
    DegenerateChiSquare {
        chi_pq: f64,
        chi_qp: f64,
        denominator: f64,
    },

    #[error("{what} = {value} outside the valid interval [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("quadrature did not converge: estimated error {achieved:e} exceeds tolerance {tol:e}")]
    Quadrature { achieved: f64, tol: f64 },

    #[error("channel matrix row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },

    #[error("no tabulated reference value for {0}")]
    Untabulated(String),

    #[error("{failed} of {trials} trials failed")]
    RunFailed { failed: usize, trials: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}
