use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid spin configuration: {0}")]
    InvalidConfig(String),

    #[error("moment vector is not a probability law: cell {cell} has probability {prob:.3e}")]
    Inconsistent { cell: usize, prob: f64 },

    #[error("invalid probability vector: {0}")]
    InvalidLaw(String),

    #[error("event cap of {cap} reached at t = {time} (target {t_end})")]
    EventCap { cap: u64, time: f64, t_end: f64 },

    #[error("no channel could be selected (all cell counts are zero)")]
    EmptySelection,

    #[error("step size underflow at t = {time} (h = {step:.3e})")]
    StepUnderflow { time: f64, step: f64 },

    #[error("iteration failed to converge after {iterations} iterations: {detail}")]
    NoConvergence { iterations: usize, detail: String },

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("replica {index}: {source}")]
    Replica {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("diffusion matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("sde path blew up at t = {time} (|x| = {value:.3e})")]
    BlowUp { time: f64, value: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
