use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {0}: local dimensions must be at least 2")]
    InvalidDimension(usize),

    #[error("layout error: {0}")]
    Layout(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("total dimension {total} exceeds the cap of {cap}; lower the sensor truncations")]
    Capacity { total: usize, cap: usize },

    #[error("not in the Mollow triplet regime: {0}")]
    Regime(String),

    #[error("steady state is not unique: {0}")]
    Degeneracy(String),

    #[error("linear solver failed: {message} (residual {residual:e})")]
    Solver { message: String, residual: f64 },

    #[error("sensor moment {moment:e} is below the noise floor {floor:e}; use a larger epsilon")]
    Precision { moment: f64, floor: f64 },

    #[error(
        "epsilon convergence failed: g = {coarse} at epsilon = {epsilon:e} but {fine} at epsilon/2"
    )]
    Convergence { epsilon: f64, coarse: f64, fine: f64 },

    #[error("truncation check failed: g = {coarse} at the default truncation but {fine} one level higher")]
    Truncation { coarse: f64, fine: f64 },

    #[error("correlation undefined: {0}")]
    Undefined(String),

    #[error("steady state failed validation: {0}")]
    Invalid(String),

    #[error("propagation failed: {0}")]
    Propagation(String),

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("no filter assignment reaches margin {requested}; best achievable is {best}")]
    Feasibility { requested: f64, best: f64 },

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("corrupt checkpoint {path}: record {record} failed its integrity check")]
    Integrity { path: PathBuf, record: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
