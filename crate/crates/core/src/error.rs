use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("{what} did not converge within {iterations} iterations")]
    ConvergenceFailure {
        what: &'static str,
        iterations: usize,
    },

    #[error("graph is disconnected (lambda2 = {lambda2:e})")]
    DisconnectedGraph { lambda2: f64 },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("Hessian of agent {agent} is not positive definite")]
    SingularHessian { agent: usize },

    #[error("invalid theory constants: {0}")]
    InvalidConstants(String),

    #[error("time grid too fine: more than {cap} steps required")]
    GridTooFine { cap: usize },

    #[error("state became non-finite at t = {t} (component {component}{})",
        agent.map(|a| format!(", agent {}", a + 1)).unwrap_or_default())]
    NonFiniteState {
        t: f64,
        component: usize,
        agent: Option<usize>,
    },

    #[error("envelope violated at t = {t}: ratio {ratio}")]
    EnvelopeViolation { t: f64, ratio: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by a bad configuration rather than by the run itself.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::Validation(_)
                | Error::InvalidGraph(_)
                | Error::DisconnectedGraph { .. }
                | Error::InvalidConstants(_)
                | Error::DimensionMismatch { .. }
                | Error::NonFiniteInput(_)
        )
    }
}
