use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parameter outside its domain: {0}")]
    Domain(String),

    #[error("time step {dt} violates the CFL limit {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("grid of {requested} values exceeds the memory cap of {cap}")]
    GridTooLarge { requested: usize, cap: usize },

    #[error("state dimension {0} is too large for the grid solver (max 4)")]
    Dimension(usize),

    #[error("state {coord} = {value} lies outside [{lower}, {upper}] in dimension {dim}")]
    OutOfDomain {
        dim: usize,
        coord: &'static str,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("rejection sampling exhausted after {proposals} proposals ({accepted} of {requested} accepted)")]
    SamplingExhausted {
        proposals: u64,
        accepted: usize,
        requested: usize,
    },

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
