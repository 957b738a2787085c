use std::path::PathBuf;

/// Errors raised across the analytic, simulation and I/O layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{what}: argument {value} outside domain")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid bracket [{lo}, {hi}]: f(lo)={f_lo}, f(hi)={f_hi}")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("{what} did not converge (residual {residual:e})")]
    Convergence {
        what: &'static str,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("configuration is infeasible: {0}")]
    Infeasible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

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
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn is_convergence(&self) -> bool {
        matches!(self, Error::Convergence { .. })
    }
}
