use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    #[error("invalid period data: {0}")]
    InvalidPeriodData(String),

    #[error("group closure failed: deck matrix residual {residual:e}")]
    GroupClosure { residual: f64 },

    #[error("profile degenerates (1 + rho_s -> 0) after s = {last_valid_s}")]
    ProfileDegenerate { last_valid_s: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}
