use std::path::PathBuf;

use thiserror::Error;

/// Coarse failure class, mapped onto process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Io,
    Computation,
}

#[derive(Debug, Error)]
pub enum TdaError {
    #[error("class `{label}` is not declared (declared classes: {declared:?})")]
    UnknownClass { label: String, declared: Vec<String> },

    #[error("class `{class}` has no records; artifact ratio would divide by zero")]
    EmptyClass { class: String },

    #[error("exactly two classes are supported, found {found:?}")]
    UnsupportedClassCount { found: Vec<String> },

    #[error("duplicate sample id `{0}`")]
    DuplicateSample(String),

    #[error("artifact tag `{tag}` is not in the declared vocabulary {vocabulary:?}")]
    UnknownArtifact { tag: String, vocabulary: Vec<String> },

    #[error("{path}: line {line}: {message}")]
    MalformedRow {
        path: String,
        line: u64,
        message: String,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("asset `{asset_id}` has kind {found}, expected {expected}")]
    KindMismatch {
        asset_id: String,
        expected: String,
        found: String,
    },

    #[error("malformed asset `{asset_id}`: {reason}")]
    MalformedAsset { asset_id: String, reason: String },

    #[error("asset `{asset_id}` scaled to {scaled_height} rows does not fit an image {image_height} rows tall")]
    PlacementOverflow {
        asset_id: String,
        scaled_height: u32,
        image_height: u32,
    },

    #[error("no {kind} assets in the {split} split")]
    EmptyPool { kind: String, split: String },

    #[error("unknown asset id `{0}`")]
    UnknownAsset(String),

    #[error("length mismatch: {left} predictions vs {right} labels")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    TrainingDiverged {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl TdaError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            TdaError::Io { .. } | TdaError::Image { .. } => ErrorCategory::Io,
            TdaError::TrainingDiverged { .. } => ErrorCategory::Computation,
            _ => ErrorCategory::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TdaError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = TdaError> = std::result::Result<T, E>;
