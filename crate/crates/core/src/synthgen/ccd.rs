//! CCD acquisition: photon shot noise, dark current and read noise.
//!
//! Per pixel the recorded count is
//! `Poisson(phi_p * eta * tau) + Poisson(I_dark * tau) + Normal(0, N_R^2)`
//! in electrons, where `phi_p` is the photon flux reaching the pixel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::emitter::EmitterModel;
use super::SynthError;
use crate::spectral::{GasCondition, Spectrum, Stage, WavelengthGrid};

/// Wavelength of the reference OH* pixel.
pub const OH_REFERENCE_NM: f64 = 308.0;
/// Electron rate at the OH* reference pixel at 10 bar, phi = 1 (463 e- in 0.2 s).
pub const OH_REFERENCE_RATE_EPS: f64 = 463.0 / 0.2;
/// Dark current reproducing a 9.1 e- dark noise at 0.2 s.
pub const DEFAULT_DARK_CURRENT_EPS: f64 = 9.1 * 9.1 / 0.2;
/// Read noise, constant across exposures.
pub const DEFAULT_READ_NOISE_E: f64 = 24.0;
pub const DEFAULT_QUANTUM_EFFICIENCY: f64 = 0.5;

pub fn oh_reference_condition() -> GasCondition {
    GasCondition {
        pressure_bar: 10.0,
        equivalence_ratio: 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcdConfig {
    pub quantum_efficiency: f64,
    pub dark_current_eps: f64,
    pub read_noise_e: f64,
    /// Multiplier from emitter-model units to photons/s at the CCD.
    pub photon_flux_scale: f64,
}

impl CcdConfig {
    /// Default noise constants with the flux scale chosen so the OH* reference
    /// pixel of `model` yields 2315 e-/s at 10 bar, phi = 1.
    pub fn calibrated_for(model: &EmitterModel) -> Self {
        let eta = DEFAULT_QUANTUM_EFFICIENCY;
        let model_rate = model.rate_at(OH_REFERENCE_NM, &oh_reference_condition());
        Self {
            quantum_efficiency: eta,
            dark_current_eps: DEFAULT_DARK_CURRENT_EPS,
            read_noise_e: DEFAULT_READ_NOISE_E,
            photon_flux_scale: OH_REFERENCE_RATE_EPS / (eta * model_rate),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !(ok(self.quantum_efficiency) && self.quantum_efficiency <= 1.0) {
            return Err(SynthError::InvalidCcd("quantum_efficiency must be in (0, 1]".into()));
        }
        for (name, v) in [
            ("dark_current_eps", self.dark_current_eps),
            ("read_noise_e", self.read_noise_e),
            ("photon_flux_scale", self.photon_flux_scale),
        ] {
            if !ok(v) {
                return Err(SynthError::InvalidCcd(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Signal electrons per second generated by a model flux.
    pub fn electron_rate(&self, model_flux: f64) -> f64 {
        model_flux * self.photon_flux_scale * self.quantum_efficiency
    }

    /// Expected dark frame (electrons) at exposure `tau_s`.
    pub fn expected_dark(&self, grid: &WavelengthGrid, tau_s: f64) -> Spectrum {
        Spectrum::new(
            *grid,
            vec![self.dark_current_eps * tau_s; grid.n_pixels],
            tau_s,
            Stage::RawCounts,
        )
        .expect("valid grid and exposure")
    }
}

/// Independent stream `stream` of the generator seeded by `root_seed`.
pub fn stream_rng(root_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream(stream);
    rng
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng)
}

/// One raw acquisition of the flux vector `model_flux` (emitter units) for
/// `tau_s` seconds.
pub fn acquire<R: Rng + ?Sized>(
    model_flux: &[f64],
    grid: &WavelengthGrid,
    tau_s: f64,
    ccd: &CcdConfig,
    rng: &mut R,
) -> Result<Spectrum, SynthError> {
    if !(tau_s > 0.0 && tau_s.is_finite()) {
        return Err(SynthError::InvalidExposure(tau_s));
    }
    if model_flux.len() != grid.n_pixels {
        return Err(SynthError::Spectral(crate::spectral::SpectralError::LengthMismatch {
            expected: grid.n_pixels,
            got: model_flux.len(),
        }));
    }
    let read = Normal::new(0.0, ccd.read_noise_e).map_err(|e| SynthError::InvalidCcd(e.to_string()))?;
    let dark_mean = ccd.dark_current_eps * tau_s;
    let counts = model_flux
        .iter()
        .map(|&f| {
            let signal = poisson(ccd.electron_rate(f) * tau_s, rng);
            let dark = poisson(dark_mean, rng);
            signal + dark + read.sample(rng)
        })
        .collect();
    Ok(Spectrum::new(*grid, counts, tau_s, Stage::RawCounts)?)
}

/// Averages `n_frames` dark acquisitions (zero flux).
pub fn mean_dark<R: Rng + ?Sized>(
    grid: &WavelengthGrid,
    tau_s: f64,
    ccd: &CcdConfig,
    n_frames: usize,
    rng: &mut R,
) -> Result<Spectrum, SynthError> {
    if n_frames == 0 {
        return Err(SynthError::BadPlan("at least one dark frame is required".into()));
    }
    let zeros = vec![0.0; grid.n_pixels];
    let mut acc = vec![0.0; grid.n_pixels];
    for _ in 0..n_frames {
        let frame = acquire(&zeros, grid, tau_s, ccd, rng)?;
        for (a, v) in acc.iter_mut().zip(frame.intensities()) {
            *a += v;
        }
    }
    let n = n_frames as f64;
    Ok(Spectrum::new(*grid, acc.into_iter().map(|v| v / n).collect(), tau_s, Stage::RawCounts)?)
}

/// Signal over root-sum-square noise.
pub fn snr_estimate(
    n_electron: f64,
    sigma_photon: f64,
    sigma_dark: f64,
    sigma_read: f64,
) -> Result<f64, SynthError> {
    let var = sigma_photon * sigma_photon + sigma_dark * sigma_dark + sigma_read * sigma_read;
    if !(var > 0.0) {
        return Err(SynthError::ZeroDenominator);
    }
    Ok(n_electron / var.sqrt())
}

/// Noise budget predicted by the model for `electron_rate` e-/s over `tau_s`.
pub fn predicted_snr(electron_rate: f64, tau_s: f64, ccd: &CcdConfig) -> f64 {
    let n = electron_rate * tau_s;
    snr_estimate(
        n,
        n.sqrt(),
        (ccd.dark_current_eps * tau_s).sqrt(),
        ccd.read_noise_e,
    )
    .unwrap_or(f64::INFINITY)
}
