use std::path::PathBuf;

use thiserror::Error;

use crate::program::SolveStatus;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid feeder: {0}")]
    InvalidFeeder(String),

    #[error("invalid trajectories: {0}")]
    InvalidTrajectories(String),

    #[error("invalid DER fleet: {0}")]
    InvalidFleet(String),

    #[error("unknown node id {0}")]
    UnknownNode(u32),

    #[error("unknown scheduling option `{0}` (expected bau, tou, pq or full)")]
    UnknownOption(String),

    #[error("infeasible EV window: {0}")]
    InfeasibleWindow(String),

    #[error("{tag}: solver finished with status {status}")]
    Solver { tag: String, status: SolveStatus },

    #[error("relaxation not exact at line into node {node}, hour {hour}: |l*v - P^2 - Q^2| = {residual:.3e}")]
    NotExact { node: u32, hour: usize, residual: f64 },

    #[error("singular sensitivity system at hour {hour} (pivot ratio {pivot_ratio:.3e})")]
    SingularSystem { hour: usize, pivot_ratio: f64 },

    #[error(
        "DLMC components disagree with balance duals: worst at node {node}, hour {hour}, side {side} (relative error {error:.3e})"
    )]
    Inconsistent {
        node: u32,
        hour: usize,
        side: String,
        error: f64,
    },

    #[error("power flow did not converge after {iterations} sweeps (last update {last_update:.3e})")]
    PowerFlow { iterations: usize, last_update: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
