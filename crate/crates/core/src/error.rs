use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("argument {value} outside the domain {domain}")]
    OutOfDomain { value: f64, domain: &'static str },
    #[error("integrand exceeded the cap {cap:e} at flow time {at}")]
    IntegrandUnbounded { at: f64, cap: f64 },
    #[error("clock stays below {target} up to the inversion horizon {horizon}")]
    NotInvertible { target: f64, horizon: f64 },
    #[error("no monotone orbit matching found: {0}")]
    WitnessNotFound(String),
    #[error("sample set is empty")]
    EmptySamples,
    #[error("expected return time diverged")]
    DivergedDenominator,
    #[error("invariant mass of the time change diverged")]
    DivergedMeasure,
    #[error("recurrence not found within {horizon} iterates at epsilon {epsilon}")]
    NotFoundWithinHorizon { epsilon: f64, horizon: u64 },
    #[error("recurrence report is not certified for this map")]
    UncertifiedReport,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("every (n, eps) cell of the grid is saturated")]
    SaturatedGrid,
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures that stem from a numerical divergence rather than bad input.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            Error::IntegrandUnbounded { .. }
                | Error::NotInvertible { .. }
                | Error::DivergedDenominator
                | Error::DivergedMeasure
        )
    }
}
