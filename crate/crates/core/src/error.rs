use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },

    #[error("signal too short: need {needed} samples, have {actual}")]
    TooShort { needed: usize, actual: usize },

    #[error("frequency {freq_hz} Hz must lie below Nyquist ({nyquist_hz} Hz)")]
    AboveNyquist { freq_hz: f64, nyquist_hz: f64 },

    #[error("empty signal")]
    Empty,

    #[error("mismatched provenance: {0}")]
    Provenance(String),

    #[error("{path}: file not found")]
    MissingFile { path: PathBuf },

    #[error("{path}:{line}: could not parse {value:?} as a number")]
    NonNumeric {
        path: PathBuf,
        line: usize,
        value: String,
    },

    #[error("{path}: empty signal file")]
    EmptyFile { path: PathBuf },

    #[error("manifest row {row}: {field} = {value} outside [{min}, {max}]")]
    RatingOutOfRange {
        row: usize,
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("manifest row {row}: {message}")]
    Manifest { row: usize, message: String },

    #[error("{path}: expected {expected} samples from manifest duration, found {actual}")]
    LengthMismatch {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

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

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: ::image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
