use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An observation that is not in the support of the family.
    #[error("sample outside the support of the {family} family: {detail}")]
    Domain {
        family: &'static str,
        detail: String,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{operation} is not supported for the {family} family")]
    Unsupported {
        operation: &'static str,
        family: &'static str,
    },

    /// Iterative MLE ran out of iterations. Carries the last iterate.
    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:e})")]
    Convergence {
        iterations: usize,
        grad_norm: f64,
        last: Vec<f64>,
    },

    #[error("simplex QP did not converge after {iterations} iterations (Frank-Wolfe gap {gap:e})")]
    QpConvergence { iterations: usize, gap: f64 },

    /// Gradient descent produced a non-finite iterate.
    #[error("iterate diverged: {0}")]
    Divergence(String),

    /// Source displacement cannot be realized inside the valid parameter region.
    #[error("regime: {0}")]
    Regime(String),

    #[error("problem too large: {0}")]
    Scale(String),

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("epoch {epoch}{}: {source}", task.map(|t| format!(" (task {t})")).unwrap_or_default())]
    Epoch {
        epoch: usize,
        task: Option<usize>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for failures of an iterative numerical routine, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Convergence { .. } | Error::QpConvergence { .. } | Error::Divergence(_) => true,
            Error::Trial { source, .. } | Error::Epoch { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn in_trial(self, trial: usize) -> Error {
        Error::Trial {
            trial,
            source: Box::new(self),
        }
    }
}
