//! Persistence: dataset manifests and blobs, model archives, and the shared
//! configuration document.

pub mod archive;
pub mod config;
pub mod manifest;

use thiserror::Error;

pub use archive::{ArchiveKind, ModelArchive, Provenance};
pub use config::Config;
pub use manifest::{ConditionEntry, Dataset, DatasetManifest, Record, Role, SpectrumKind};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Spectral(#[from] crate::spectral::SpectralError),
}
