use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument lies outside the domain of the operation.
    #[error("{name} = {value} is out of range: {reason}")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// The gains do not satisfy the strict two-sided gain condition.
    #[error("gain condition violated for lambda1 = {lambda1}, lambda2 = {lambda2}, alpha = {alpha}")]
    GainCondition { lambda1: f64, lambda2: f64, alpha: f64 },

    #[error("invalid argument `{spec}`: {reason}")]
    Spec { spec: String, reason: String },

    #[error("malformed CSV at line {line}: {reason}")]
    Csv { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::Domain { name, value, reason }
    }

    pub(crate) fn spec(spec: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Spec {
            spec: spec.into(),
            reason: reason.into(),
        }
    }
}
