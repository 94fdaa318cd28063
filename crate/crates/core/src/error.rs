//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A configuration file could not be parsed.
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Two points sit at an exact-overlap distance even after jitter.
    #[error("degenerate configuration: points {i} and {j} at distance {dist} within tie tolerance of the overlap threshold")]
    DegenerateConfiguration { i: usize, j: usize, dist: f64 },

    /// A query point lies outside the domain it must belong to.
    #[error("domain error: {0}")]
    Domain(String),

    /// Geometry query leaves the region covered by the data structure.
    #[error("out of domain: {0}")]
    OutOfDomain(String),

    /// Reflection cap exceeded; the caller should shrink the step.
    #[error("step rejected after {reflections} reflections")]
    StepRejected { reflections: usize },

    /// A whole path simulation failed even after sub-stepping.
    #[error("simulation failure at t={t}: {message}")]
    SimulationFailure { t: f64, message: String },

    /// Iterative solver did not reach the requested tolerance.
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
