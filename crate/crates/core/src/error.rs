use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("`{field}` = {value} is outside its domain: {requirement}")]
    Domain {
        field: &'static str,
        value: f64,
        requirement: &'static str,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// The inverse propensity scores have no finite mean under the Beta model.
    #[error(
        "infinite variance: overlap phi = {phi:.4} at r = {r:.4} implies min(a, b) <= 1; \
         the minimum feasible phi is {min_phi:.4}"
    )]
    InfiniteVariance { r: f64, phi: f64, min_phi: f64 },

    #[error("moment does not exist: requires {condition} (a = {a}, b = {b})")]
    Existence { condition: &'static str, a: f64, b: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    Convergence { what: &'static str, iterations: usize },

    #[error("root bracket failure for {what}: {detail}")]
    Bracket { what: &'static str, detail: String },

    #[error("separation: {0}")]
    Separation(String),

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("information is not positive ({0})")]
    SingularInformation(f64),

    #[error("invalid data: {0}")]
    Data(String),
}

impl Error {
    /// Stable machine-readable code used in error documents.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain",
            Error::Degenerate(_) => "degenerate",
            Error::InfiniteVariance { .. } => "infinite-variance",
            Error::Existence { .. } => "existence",
            Error::Convergence { .. } => "convergence",
            Error::Bracket { .. } => "bracket",
            Error::Separation(_) => "separation",
            Error::RankDeficient => "rank-deficient",
            Error::SingularInformation(_) => "singular-information",
            Error::Data(_) => "invalid-data",
        }
    }

    /// Input field responsible for the error, when one can be named.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            Error::Domain { field, .. } => Some(field),
            Error::InfiniteVariance { .. } => Some("phi"),
            _ => None,
        }
    }

    pub fn is_convergence(&self) -> bool {
        matches!(
            self,
            Error::Convergence { .. } | Error::Bracket { .. } | Error::Separation(_)
        )
    }
}

/// Checks `lo < value < hi`.
pub(crate) fn open_interval(
    field: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
    requirement: &'static str,
) -> Result<f64> {
    if value.is_finite() && value > lo && value < hi {
        Ok(value)
    } else {
        Err(Error::Domain {
            field,
            value,
            requirement,
        })
    }
}

/// Checks `lo < value <= hi`.
pub(crate) fn half_open(field: &'static str, value: f64, lo: f64, hi: f64, requirement: &'static str) -> Result<f64> {
    if value.is_finite() && value > lo && value <= hi {
        Ok(value)
    } else {
        Err(Error::Domain {
            field,
            value,
            requirement,
        })
    }
}
