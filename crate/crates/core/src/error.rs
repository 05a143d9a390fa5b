use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid puzzle geometry: {0}")]
    InvalidSpec(String),

    #[error("image is {width}x{height}, not a multiple of the {piece_px}px piece size")]
    DimensionMismatch {
        width: usize,
        height: usize,
        piece_px: usize,
    },

    #[error("malformed bundle at {path}: {reason}")]
    InvalidBundle { path: PathBuf, reason: String },

    #[error("malformed placement problem: {0}")]
    InvalidProblem(String),

    #[error("oracle limited to {max_vars} variables and {max_terms} terms, got {vars} and {terms}")]
    OracleTooLarge {
        vars: usize,
        terms: usize,
        max_vars: usize,
        max_terms: usize,
    },

    #[error("inconsistent group offsets: {0}")]
    InconsistentGroups(String),

    #[error("cannot complete assembly: {0}")]
    Fill(String),

    #[error("distance cache mismatch: {0}")]
    Cache(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("JSON error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
