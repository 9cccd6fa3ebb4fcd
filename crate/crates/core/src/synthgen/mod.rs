//! Synthetic stand-in for the high-pressure burner experiment: a clean
//! emission model, CCD acquisition noise and experiment designs.

pub mod ccd;
pub mod dataset;
pub mod design;
pub mod emitter;

use thiserror::Error;

use crate::spectral::SpectralError;

pub use ccd::{acquire, mean_dark, predicted_snr, snr_estimate, stream_rng, CcdConfig};
pub use dataset::{assign_roles, build_dataset, AcquisitionPlan};
pub use design::{full_factorial, latin_hypercube, PlanKind, SamplingPlan};
pub use emitter::{clean_spectrum, EmitterModel};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("invalid emitter model: {0}")]
    InvalidModel(String),
    #[error("invalid CCD configuration: {0}")]
    InvalidCcd(String),
    #[error("exposure must be positive, got {0} s")]
    InvalidExposure(f64),
    #[error("bad sampling plan: {0}")]
    BadPlan(String),
    #[error("SNR denominator is zero")]
    ZeroDenominator,
}
