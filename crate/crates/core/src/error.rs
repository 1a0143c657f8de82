use crate::data_model::TimeIndex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("location {0}: empty series")]
    EmptySeries(String),

    #[error("quantile level {0} outside (0, 1)")]
    QuantileLevel(f64),

    #[error("location {location}: time indices must be strictly increasing (t={time})")]
    NonIncreasingTime { location: String, time: TimeIndex },

    #[error("location {location}: non-finite value at t={time}")]
    NonFinite { location: String, time: TimeIndex },

    #[error("location {location}: excess at t={time} must be positive, got {value}")]
    NonPositiveExcess {
        location: String,
        time: TimeIndex,
        value: f64,
    },

    #[error("duplicate location id '{0}'")]
    DuplicateLocation(String),

    #[error("panel has no locations")]
    NoLocations,

    #[error("constant covariate '{name}'{}", location.as_ref().map(|l| format!(" at location {l}")).unwrap_or_default())]
    ConstantCovariate { name: String, location: Option<String> },

    #[error("missing covariate records for (location, time): {}", format_missing(.0))]
    MissingCovariates(Vec<(String, TimeIndex)>),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("panels are not aligned: {0}")]
    Misaligned(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("point infeasible under every regime at location {location}, t={time}")]
    InfeasiblePoint { location: String, time: TimeIndex },

    #[error("no feasible starting point for regime {regime} after {attempts} attempts")]
    NoFeasibleStart { regime: usize, attempts: usize },

    #[error("sample too small for AICc: n={n}, p={p}")]
    SampleTooSmall { n: usize, p: usize },

    #[error("hessian evaluation for regime {regime} hits infeasible points after step shrinkage")]
    HessianInfeasible { regime: usize },

    #[error("scenario infeasible: {0}")]
    InfeasibleScenario(String),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to invalid
    /// input data or arguments.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::InfeasiblePoint { .. }
                | Error::NoFeasibleStart { .. }
                | Error::SampleTooSmall { .. }
                | Error::HessianInfeasible { .. }
                | Error::InfeasibleScenario(_)
        )
    }
}

fn format_missing(missing: &[(String, TimeIndex)]) -> String {
    const SHOWN: usize = 10;
    let mut out = missing
        .iter()
        .take(SHOWN)
        .map(|(l, t)| format!("({l}, {t})"))
        .collect::<Vec<_>>()
        .join(", ");
    if missing.len() > SHOWN {
        out.push_str(&format!(" and {} more", missing.len() - SHOWN));
    }
    out
}
