use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index out of range: {what} {index} (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("gradient norm {norm} exceeds configured cap {cap}")]
    GradientNormCap { norm: f64, cap: f64 },

    #[error("exhaustive search over {n} centers refused (limit {limit})")]
    TooManyCenters { n: usize, limit: usize },

    #[error("offline problem infeasible: {0}")]
    Infeasible(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("trace row {row}: {kind}")]
    Trace { row: usize, kind: TraceErrorKind },

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("config error: {0}")]
    Config(String),
}

/// Distinct failure modes of the long-format trace loader.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceErrorKind {
    Malformed(String),
    Duplicate { slot: usize, center: usize },
    Negative(f64),
    NonFinite,
    Missing { slot: usize, center: usize },
    BadHeader(String),
}

impl std::fmt::Display for TraceErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TraceErrorKind::Malformed(s) => write!(f, "malformed row: {s}"),
            TraceErrorKind::Duplicate { slot, center } => {
                write!(f, "duplicate pair (slot {slot}, center {center})")
            }
            TraceErrorKind::Negative(v) => write!(f, "negative intensity {v}"),
            TraceErrorKind::NonFinite => write!(f, "non-finite intensity"),
            TraceErrorKind::Missing { slot, center } => {
                write!(f, "missing pair (slot {slot}, center {center})")
            }
            TraceErrorKind::BadHeader(h) => write!(f, "unexpected header {h:?}"),
        }
    }
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
