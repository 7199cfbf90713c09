use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("rotor {rotor} commanded a negative speed ({speed} rad/s)")]
    NegativeRotorSpeed { rotor: usize, speed: f64 },

    #[error("pitch angle {pitch} rad is at the Euler-rate singularity (gimbal lock)")]
    GimbalLock { pitch: f64 },

    #[error("longitudinal speed {speed} m/s is below the slip-angle guard of {min} m/s")]
    LowSpeed { speed: f64, min: f64 },

    #[error("state {index} diverged to {value} (blow-up bound {bound})")]
    Divergence { index: usize, value: f64, bound: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("experiment setup: {0}")]
    Setup(String),

    #[error("SVR training did not converge after {iterations} iterations (KKT violation {violation:e})")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

pub(crate) fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
