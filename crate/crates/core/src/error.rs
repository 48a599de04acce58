use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("price panel has {rows} usable rows, at least 2 are required")]
    EmptyPanel { rows: usize },

    #[error("unknown ticker `{0}`")]
    UnknownTicker(String),

    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("malformed date `{value}` on line {line}")]
    MalformedDate { line: u64, value: String },

    #[error("asset `{asset}` has {found} observations, at least {needed} are required")]
    InsufficientData {
        asset: String,
        needed: usize,
        found: usize,
    },

    #[error("asset `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("sample is empty")]
    EmptySample,

    #[error("sample contains a non-finite value")]
    NonFinite,

    #[error("confidence level {0} is outside (0, 1)")]
    InvalidAlpha(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by user-supplied data or parameters rather than
    /// by the environment.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}
