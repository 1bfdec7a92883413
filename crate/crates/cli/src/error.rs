use std::path::PathBuf;

use esvit_core::Error as CoreError;
use esvit_nn::NnError;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error(transparent)]
    Core(CoreError),

    #[error(transparent)]
    Nn(NnError),
}

impl CliError {
    /// Process exit status: 2 config, 3 missing input, 4 invariant, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingInput(_) => 3,
            CliError::Invariant(_) => 4,
            CliError::Io { .. } => 1,
            CliError::Core(e) => match e {
                CoreError::MissingFile { .. } => 3,
                CoreError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 3,
                CoreError::InvalidArgument(_)
                | CoreError::AboveNyquist { .. }
                | CoreError::Manifest { .. }
                | CoreError::RatingOutOfRange { .. } => 2,
                CoreError::NonFinite { .. }
                | CoreError::Provenance(_)
                | CoreError::LengthMismatch { .. } => 4,
                _ => 1,
            },
            CliError::Nn(e) => match e {
                NnError::Config(_) | NnError::LabelOutOfRange { .. } => 2,
                NnError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 3,
                NnError::ShapeMismatch { .. }
                | NnError::InvalidShape { .. }
                | NnError::NonFinite { .. }
                | NnError::NonScalarLoss { .. } => 4,
                _ => 1,
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.into(),
            message: e.to_string(),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        CliError::Nn(e)
    }
}
