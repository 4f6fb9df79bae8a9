use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("symbol {symbol} outside table range [{lo}, {hi}]")]
    SymbolOutOfTable { symbol: i64, lo: i64, hi: i64 },

    #[error("auxiliary reservoir exhausted (strict mode)")]
    ReservoirExhausted,

    #[error("degenerate stddev {stddev} at precision {k} (stddev * 2^k below 2^-20)")]
    DegenerateStddev { stddev: f64, k: i32 },

    #[error("support window of {bins} bins does not fit table precision {precision}")]
    WindowTooLarge { bins: u64, precision: u32 },

    #[error("bin {index} outside support window [{lo}, {hi}] (mean {mean}, stddev {stddev})")]
    OutOfSupport { index: i64, lo: i64, hi: i64, mean: f64, stddev: f64 },

    #[error("value {value} not representable at precision {k}")]
    Overflow { value: f64, k: u32 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not invertible (|det| = {det:e})")]
    NonInvertible { det: f64 },

    #[error("layer {0} has no per-coordinate coding form")]
    UnsupportedLayer(&'static str),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("invalid codec parameters: {0}")]
    InvalidParams(String),

    #[error("value {value} out of range for bit depth {bits}")]
    OutOfRange { value: i64, bits: u32 },

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("unsupported format version {0}")]
    VersionMismatch(u32),

    #[error("corrupt tensor data: {0}")]
    CorruptTensor(String),

    #[error("model hash mismatch: archive {archive:016x}, supplied {supplied:016x}")]
    HashMismatch { archive: u64, supplied: u64 },

    #[error("corrupt archive: {0}")]
    CorruptArchive(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::SymbolOutOfTable { .. } => "SymbolOutOfTable",
            Error::ReservoirExhausted => "ReservoirExhausted",
            Error::DegenerateStddev { .. } => "DegenerateStddev",
            Error::WindowTooLarge { .. } => "WindowTooLarge",
            Error::OutOfSupport { .. } => "OutOfSupport",
            Error::Overflow { .. } => "Overflow",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonInvertible { .. } => "NonInvertible",
            Error::UnsupportedLayer(_) => "UnsupportedLayer",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::InvalidParams(_) => "InvalidParams",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::BadMagic { .. } => "BadMagic",
            Error::VersionMismatch(_) => "VersionMismatch",
            Error::CorruptTensor(_) => "CorruptTensor",
            Error::HashMismatch { .. } => "HashMismatch",
            Error::CorruptArchive(_) => "CorruptArchive",
            Error::Io(_) => "Io",
        }
    }
}
