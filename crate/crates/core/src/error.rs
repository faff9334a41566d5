use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("integrand is not square integrable: {0}")]
    Integrability(String),
    #[error("laguerre rank undetermined up to order {q_max}; raise q_max")]
    RankUndetermined { q_max: usize, coeffs: Vec<f64> },
    #[error("singular integral diverges: exponent {s} >= dimension {d}")]
    Divergence { s: f64, d: usize },
    #[error("series outside its convergence disc: {0}")]
    Convergence(String),
    #[error("discretization failure: {0}")]
    Discretization(String),
    #[error("resolution too coarse: {0}")]
    Resolution(String),
    #[error("simulation infeasible: {0}")]
    SimulationInfeasible(String),
    #[error("function evaluation failed: {0}")]
    Evaluation(String),
    #[error("accuracy target not met: {0}")]
    Accuracy(String),
    #[error("statistics error: {0}")]
    Statistics(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for bad input, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::Config(_)
            | Error::RankUndetermined { .. }
            | Error::Divergence { .. }
            | Error::Statistics(_)
            | Error::Io(_)
            | Error::Json(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
