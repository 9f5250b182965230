use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// `Domain` marks inputs outside an operation's precondition; `Numerical`
/// marks a computation that ran but could not certify its result.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum PamError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature routes disagree: fourier={fourier:e}, time={time:e} (tol {tol:e})")]
    RouteMismatch { fourier: f64, time: f64, tol: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("walker left the box at site {site:?} (radius {radius}); increase the box radius")]
    BoxExit { site: Vec<i32>, radius: i32 },

    #[error("non-finite exponent {exponent} in replica {replica}")]
    Overflow { replica: u64, exponent: f64 },

    #[error("no replica satisfied the endpoint constraint ({replicas} tried); use more replicas or a smaller t")]
    DegenerateEstimate { replicas: usize },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

impl PamError {
    pub fn domain(msg: impl Into<String>) -> Self {
        PamError::Domain(msg.into())
    }

    /// True for errors caused by bad inputs rather than failed numerics.
    pub fn is_domain(&self) -> bool {
        matches!(self, PamError::Domain(_) | PamError::BoxExit { .. })
    }
}

pub type Result<T> = std::result::Result<T, PamError>;
