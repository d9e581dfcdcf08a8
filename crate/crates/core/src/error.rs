use std::path::PathBuf;

use thiserror::Error;

use crate::ellipsoid::SolveResult;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("antenna counts must be >= 1 (got {n_s}x{n_r}x{n_d})")]
    AntennaCount { n_s: usize, n_r: usize, n_d: usize },
    #[error("harvest efficiency must lie in [0, 1], got {0}")]
    Efficiency(f64),
    #[error("{name} must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must be finite, got {value}")]
    NotFinite { name: &'static str, value: f64 },
}

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("every singular value of the {hop} channel is below threshold")]
    AllZeroChannel { hop: &'static str },
    #[error("channel matrix {name} has shape {got:?}, expected {expected:?}")]
    Shape {
        name: &'static str,
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("channel matrix {0} contains a non-finite entry")]
    NonFinite(&'static str),
    #[error("malformed channel file: {0}")]
    Format(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
}

/// Errors raised while evaluating the dual function.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DualError {
    /// The Lagrangian is unbounded above at this dual point. `normal` is the
    /// outward normal (in `(alpha, nu, mu)` coordinates) of the violated
    /// domain constraint, usable directly as a feasibility cut.
    #[error("Lagrangian unbounded above at this dual point")]
    UnboundedLagrangian { normal: [f64; 3] },
    #[error("dual point outside the box alpha in [0,1], nu >= 0, mu >= 0")]
    OutsideBox,
    #[error(transparent)]
    Rate(#[from] RateError),
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("degenerate ellipsoid cut (g'Pg = {0:e})")]
    DegenerateCut(f64),
    #[error("solver did not converge in {} iterations", .0.iters)]
    NotConverged(Box<SolveResult>),
    #[error("invalid solver input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Dual(#[from] DualError),
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle grid is exponential in K1; K1 = {0} exceeds the limit of 3")]
    OracleTooLarge(usize),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}
