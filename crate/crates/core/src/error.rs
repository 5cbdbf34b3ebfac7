use crate::dynamics::IntegrationError;
use crate::exprlang::{ChartError, EvalError, ParseError};

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("singular metric: |det| = {det:e} is below the degeneracy threshold")]
    SingularMetric { det: f64 },
    #[error("metric is not skew-symmetric: {0}")]
    NotSkew(String),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("expression size {nodes} exceeds the cap of {cap} nodes")]
    ExpressionTooLarge { nodes: usize, cap: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("closed form not applicable: {0}")]
    NotApplicable(String),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
