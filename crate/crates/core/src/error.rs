use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A `SystemConfig` invariant does not hold. The message names the field.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("config file {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },

    #[error("{name} must be non-negative, got {value}")]
    NegativeInput { name: &'static str, value: f64 },

    #[error("{name} must be strictly positive, got {value}")]
    NonPositiveInput { name: &'static str, value: f64 },

    #[error("energy overdraw: battery would drop to {value:e} J (constraint on transmit energy violated upstream)")]
    EnergyOverdraw { value: f64 },

    #[error("empty queue trace")]
    EmptyTrace,

    #[error("infeasible start: constraint `{name}` evaluates to {value:e} at the initial point")]
    InfeasibleStart { name: String, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("infeasible frame: node {node} needs at least {p_min:e} W but the energy-limited cap is {cap:e} W")]
    InfeasibleFrame { node: usize, p_min: f64, cap: f64 },

    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("sca iteration {iteration}: {message}")]
    Sca { iteration: usize, message: String },

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("replay mismatch at frame {frame}, node {node}: {what}")]
    Replay { frame: usize, node: usize, what: String },

    #[error("experiment: {0}")]
    Experiment(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn non_negative(name: &'static str, value: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else {
        Err(Error::NegativeInput { name, value })
    }
}

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 {
        Ok(value)
    } else {
        Err(Error::NonPositiveInput { name, value })
    }
}
