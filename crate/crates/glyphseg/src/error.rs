use std::path::PathBuf;

use glyphseg_core::CoreError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed annotation document: {0}")]
    MalformedDocument(String),
    #[error("annotation document is missing field `{0}`")]
    MissingField(&'static str),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),
    #[error("weights not found at {0}")]
    WeightsNotFound(PathBuf),
    #[error("weight checksum mismatch: expected prefix {expected}, got {actual}")]
    ChecksumMismatch { expected: String, actual: String },
    #[error("unsupported model variant `{0}`")]
    UnsupportedVariant(String),
    #[error("unsupported baseline kind `{0}`")]
    UnsupportedKind(String),
    #[error("split `{0}` has no records")]
    EmptySplit(&'static str),
    #[error("non-finite loss at epoch {epoch}, step {step}: {value}")]
    NonFiniteLoss { epoch: usize, step: usize, value: f32 },
    #[error("promptable models need a non-empty prompt set")]
    EmptyPromptSet,
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("synthetic generation failed: {0}")]
    GenerationFailure(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 3 for data
    /// problems, 4 for model, training or evaluation failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnsupportedVariant(_) | Error::UnsupportedKind(_) => 2,
            Error::Core(_)
            | Error::Io { .. }
            | Error::MalformedDocument(_)
            | Error::MissingField(_)
            | Error::Image(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::Manifest(_)
            | Error::EmptySplit(_)
            | Error::GenerationFailure(_) => 3,
            Error::Tensor(_)
            | Error::WeightsNotFound(_)
            | Error::ChecksumMismatch { .. }
            | Error::NonFiniteLoss { .. }
            | Error::EmptyPromptSet => 4,
        }
    }

    /// Short machine-readable category for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Core(_) => "core",
            Error::Io { .. } => "io",
            Error::MalformedDocument(_) => "malformed_document",
            Error::MissingField(_) => "missing_field",
            Error::Image(_) => "image",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Tensor(_) => "tensor",
            Error::WeightsNotFound(_) => "weights_not_found",
            Error::ChecksumMismatch { .. } => "checksum_mismatch",
            Error::UnsupportedVariant(_) => "unsupported_variant",
            Error::UnsupportedKind(_) => "unsupported_kind",
            Error::EmptySplit(_) => "empty_split",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::EmptyPromptSet => "empty_prompt_set",
            Error::Manifest(_) => "manifest",
            Error::Config(_) => "config",
            Error::GenerationFailure(_) => "generation_failure",
        }
    }
}
