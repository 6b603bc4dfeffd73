use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RffError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("state has no weight in the encoding sector (p = {0:e})")]
    SectorDepleted(f64),

    #[error("time step does not resolve the dynamics: {0}")]
    Resolution(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("step rejected: {0}")]
    StepRejected(String),

    #[error("not a minimum: {0}")]
    NotAMinimum(String),

    #[error("infeasible compensation: {0}")]
    InfeasibleCompensation(String),
}

pub type Result<T> = std::result::Result<T, RffError>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(RffError::Parameter(msg.into()))
}
