use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("MANIFEST_PARSE: {path}: {reason}")]
    ManifestParse { path: PathBuf, reason: String },

    #[error("MANIFEST: dataset manifest not found: {0}")]
    ManifestMissing(PathBuf),

    #[error("EMPTY_DATASET: {0}")]
    EmptyDataset(String),

    #[error("INSUFFICIENT_FRAMES: need at least {needed} frames, have {have}")]
    InsufficientFrames { needed: usize, have: usize },

    #[error("SHAPE_ERROR: {0}")]
    Shape(String),

    #[error("EMPTY_SET: conditional discriminator needs at least one (image, time) pair")]
    EmptySet,

    #[error("DOMAIN_ERROR: score {0} outside (0, 1)")]
    Domain(f64),

    #[error("WEIGHTS_LOAD: {0}")]
    WeightsLoad(String),

    #[error("MODE_MISMATCH: {0}")]
    ModeMismatch(String),

    #[error("NONFINITE_LOSS: {term} = {value} at iteration {iteration}")]
    NonfiniteLoss {
        term: String,
        value: f64,
        iteration: u64,
    },

    #[error("CONFIG_MISMATCH: checkpoint config hash {found} does not match {expected}")]
    ConfigMismatch { expected: String, found: String },

    #[error("CORRUPT_CHECKPOINT: {0}")]
    CorruptCheckpoint(String),

    #[error("NONCONVERGENCE: conjugate gradient stopped after {iterations} iterations at relative residual {residual:e}")]
    Nonconvergence { iterations: usize, residual: f64 },

    #[error("OUTPUT_EXISTS: {0} already exists (pass --force to overwrite)")]
    OutputExists(PathBuf),

    #[error("CONFIG: {0}")]
    Config(String),

    #[error("IMAGE: {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("IO_ERROR: {context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code: 2 usage/config, 3 data/IO, 4 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::ManifestMissing(_) | Error::ModeMismatch(_) => 2,
            Error::ManifestParse { .. }
            | Error::EmptyDataset(_)
            | Error::WeightsLoad(_)
            | Error::ConfigMismatch { .. }
            | Error::CorruptCheckpoint(_)
            | Error::OutputExists(_)
            | Error::Image { .. }
            | Error::Io { .. } => 3,
            Error::InsufficientFrames { .. }
            | Error::Shape(_)
            | Error::EmptySet
            | Error::Domain(_)
            | Error::NonfiniteLoss { .. }
            | Error::Nonconvergence { .. } => 4,
        }
    }
}
