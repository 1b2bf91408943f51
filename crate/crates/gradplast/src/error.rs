//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("operation requires periodic topology")]
    TopologyUnsupported,

    #[error("gradient exponent r = {0} out of range (need r > 6/5)")]
    InvalidExponent(f64),

    #[error("density argument must be symmetric (asymmetry {0:.3e})")]
    NonSymmetricInput(f64),

    #[error("invalid energy config: {0}")]
    InvalidConfig(String),

    #[error("{solver} did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence {
        solver: &'static str,
        residual: f64,
        iterations: usize,
    },

    #[error("time step tau = {tau:.3e} too large; incremental problem needs tau < {limit:.3e}")]
    TauTooLarge { tau: f64, limit: f64 },

    #[error("need at least {min} time steps, got {got}")]
    InvalidN { got: usize, min: usize },

    #[error("certificate requires delta = 0 with H_e = H_p = 0: {0}")]
    ConfigMismatch(String),

    #[error("sequence lengths differ: {0}")]
    LengthMismatch(String),

    #[error("trajectory is incomplete (failed at step {0})")]
    IncompleteTrajectory(usize),

    #[error("snapshot format error: {0}")]
    SnapshotFormat(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code contract of the command-line front end:
    /// 1 config error, 2 solver failure, 3 certificate failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NoConvergence { .. } | Error::TauTooLarge { .. } => 2,
            _ => 1,
        }
    }
}
