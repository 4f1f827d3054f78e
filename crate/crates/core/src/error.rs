use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("no connected graph after {attempts} attempts")]
    ConnectivityExhausted { attempts: usize },

    #[error("no graph satisfying the spectral assumptions after {attempts} attempts")]
    AssumptionResampleExhausted { attempts: usize },

    #[error("symmetric eigensolver did not converge")]
    EigenNonConvergence,

    #[error("alpha + gamma * lambda_star = {0} is not positive")]
    NonPositiveDenominator(f64),

    #[error("linearized Jacobian is singular")]
    SingularJacobian,

    #[error("agent {0} has zero weight on both v* and the bias direction")]
    DegenerateDirection(usize),

    #[error("bias {b} outside [-{b_max}, {b_max}]")]
    BiasOutOfRange { b: f64, b_max: f64 },

    #[error("consensus not reached: spread {spread:e} after {iters} iterations (estimate {value})")]
    NotConverged { value: f64, iters: usize, spread: f64 },

    #[error("opinion state diverged at t = {t}: max |x| = {max_abs}")]
    Divergence { t: f64, max_abs: f64 },

    #[error("payoff matrix has no interior mixed Nash equilibrium")]
    NoInteriorNash,

    #[error("need at least two samples, got {0}")]
    InsufficientSamples(usize),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by bad input rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_) | Error::Config(_) | Error::Json(_) | Error::Dimension { .. }
        )
    }
}
