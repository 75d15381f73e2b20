use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("density is not positive at the observation (p = {0})")]
    NonPositiveDensity(f64),
    #[error("probability vector is not a point of the simplex: {0}")]
    InvalidSimplexPoint(String),
    #[error("integral of the density power did not converge: {0}")]
    DivergentIntegral(String),
    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),
    #[error("Bregman gauge is negative: alpha({t}) = {value}")]
    GaugeNegative { t: f64, value: f64 },
    #[error("second derivative of the log-density is not finite at x = {0}")]
    NonSmoothDensity(f64),
    #[error("correlation {rho} outside ({lower}, 1)")]
    RhoOutOfDomain { rho: f64, lower: f64 },
    #[error("parameter outside the model domain: {0}")]
    ThetaOutOfDomain(String),
    #[error("optimizer did not converge: {0}")]
    NoConvergence(String),
    #[error("line search left the parameter domain: {0}")]
    DomainEscape(String),
    #[error("profile needs a nonempty nuisance block (psi covers every coordinate)")]
    EmptyNuisance,
    #[error("invalid parameter partition: {0}")]
    InvalidPartition(String),
    #[error("data are degenerate: {0}")]
    DegenerateData(String),
    #[error("matrix K is singular")]
    SingularK,
    #[error("matrix J is singular")]
    SingularJ,
    #[error("sandwich variance V is singular")]
    SingularV,
    #[error("psi block of K^-1 or G^-1 is singular")]
    SingularBlock,
    #[error("statistic requires a scalar parameter, got dimension {0}")]
    NotScalarParam(usize),
    #[error("mixture weight is not positive: {0}")]
    NegativeWeight(String),
    #[error("ratio statistic is negative ({0}); the fit has not reached a minimum")]
    NegativeRatio(f64),
    #[error("too many failed replications: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
