use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error(
        "tensor rule needs {nodes} nodes which exceeds the budget of {budget}; use a monte-carlo rule instead"
    )]
    NodeBudget { nodes: u128, budget: usize },

    #[error("projection multiplier search did not converge after {iterations} iterations (bracket [{lo}, {hi}])")]
    ProjectionIterationLimit { iterations: usize, lo: f64, hi: f64 },

    #[error("prox solver hit the iteration limit ({iterations}) with gradient residual {residual:e}")]
    ProxIterationLimit { iterations: usize, residual: f64, best: Vec<f64> },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("non-finite integrand at quadrature node {node:?}")]
    NonFiniteIntegrand { node: Vec<f64> },

    #[error("assembly consistency violated: {0}")]
    AssemblyConsistency(String),

    #[error("factorization failed at pivot {pivot} (value {value:e})")]
    Conditioning { pivot: usize, value: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("growth certificate violated at s = {worst_s}: ratio {ratio}")]
    GrowthViolation { worst_s: f64, ratio: f64 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{context}: {source}")]
    Annotated {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn annotate(self, context: impl Into<String>) -> Self {
        Error::Annotated { context: context.into(), source: Box::new(self) }
    }
}
