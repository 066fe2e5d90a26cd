use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad user input: schema, configuration, or data that fails validation.
    #[error("{0}")]
    Invalid(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("rank deficient design: column(s) {} are collinear with earlier columns", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("no residual treatment variation: the treatment is perfectly predicted by the covariates (positivity violated)")]
    NoTreatmentVariation,

    #[error("lasso did not converge after {sweeps} sweeps (last max coefficient change {change:e}, kkt residual {kkt_residual:e})")]
    NotConverged {
        sweeps: usize,
        change: f64,
        kkt_residual: f64,
    },

    #[error("full model saturated (n = {n}, p = {p}); supply --sigma")]
    Saturated { n: usize, p: usize },

    #[error("selection event infeasible at the observed response (margin {margin:e}); solver and event disagree")]
    InfeasibleEvent { margin: f64 },

    #[error("truncation interval inverted: lower {lower} > upper {upper}")]
    InvertedInterval { lower: f64, upper: f64 },

    #[error("interval numerically unbounded: pivot inversion left the bracket of {limit:e}")]
    UnboundedInterval { limit: f64 },

    #[error("selection event undefined at λ=0")]
    ZeroLambda,

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for errors caused by the caller's input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_) | Error::Csv(_) | Error::Io(_) | Error::Json(_) | Error::ZeroLambda
        )
    }
}
