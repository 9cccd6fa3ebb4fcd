//! Denoising and calibration of short-exposure flame emission spectra.
//!
//! The crate covers the whole chain: a synthetic flame/CCD generator, OH*
//! normalized preprocessing, a POD basis with min-max normalized
//! coefficients, an ordinary-kriging surrogate from coefficients to
//! pressure and equivalence ratio, and a 1D CNN denoiser with a reversible
//! down/up-sampling operator trained on a blended MSE + POD-coefficient loss.

pub mod dnn;
pub mod eval;
pub mod io;
pub mod kriging;
pub mod pod;
pub mod spectral;
pub mod synthgen;

pub use spectral::{GasCondition, Spectrum, SpectrumPair, Stage, WavelengthGrid};
