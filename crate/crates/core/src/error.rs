use thiserror::Error;

/// Failures raised by the integrators, the history buffer and the model layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("{key}: {message}")]
    InvalidParameter { key: String, message: String },

    #[error("step size {h:e} fell below h_min after repeated rejections at t = {t}")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("non-finite right-hand side at t = {t}: {detail}")]
    NonFinite { t: f64, detail: String },

    #[error("time {t} lies outside segment [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("history queried at t = {t} beyond frontier {frontier}")]
    Causality { t: f64, frontier: f64 },

    #[error("segment [{start}, {end}] does not start at frontier {frontier}")]
    SegmentGap { start: f64, end: f64, frontier: f64 },
}

impl Error {
    /// Last time up to which the solution is known to be good, when the
    /// failure happened mid-integration.
    pub fn last_good_time(&self) -> Option<f64> {
        match self {
            Error::StepSizeUnderflow { t, .. } | Error::NonFinite { t, .. } => Some(*t),
            Error::Causality { frontier, .. } => Some(*frontier),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
