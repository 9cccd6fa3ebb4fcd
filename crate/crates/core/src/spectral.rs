//! Spectral data types and the preprocessing chain applied to every
//! acquisition: dark subtraction, OH* band normalization and intensity
//! augmentation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower edge of the OH* normalization window (nm).
pub const OH_BAND_LO_NM: f64 = 306.0;
/// Upper edge of the OH* normalization window (nm).
pub const OH_BAND_HI_NM: f64 = 313.0;

/// Allowed range for the intensity augmentation factor.
pub const AUGMENT_RANGE: (f64, f64) = (0.8, 1.2);

/// Supported gas-condition envelope.
pub const PRESSURE_RANGE_BAR: (f64, f64) = (1.0, 10.0);
pub const PHI_RANGE: (f64, f64) = (0.8, 1.2);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("invalid wavelength grid: {0}")]
    InvalidGrid(String),
    #[error("condition (P = {pressure_bar} bar, phi = {equivalence_ratio}) is outside the supported envelope")]
    OutOfEnvelope {
        pressure_bar: f64,
        equivalence_ratio: f64,
    },
    #[error("intensity vector has {got} entries, grid has {expected} pixels")]
    LengthMismatch { expected: usize, got: usize },
    #[error("exposure must be positive and finite, got {0}")]
    InvalidExposure(f64),
    #[error("no pixel center falls in [{lo_nm}, {hi_nm}] nm")]
    EmptyBand { lo_nm: f64, hi_nm: f64 },
    #[error("wavelength grids differ")]
    GridMismatch,
    #[error("exposure times differ ({0} s vs {1} s)")]
    ExposureMismatch(f64, f64),
    #[error("operation requires stage {expected:?}, spectrum is at {got:?}")]
    WrongStage { expected: Stage, got: Stage },
    #[error("OH* band mean is {0}, expected a positive value")]
    NonPositiveBand(f64),
    #[error("augmentation factor {0} outside [0.8, 1.2]")]
    FactorOutOfRange(f64),
    #[error("invalid spectrum pair: {0}")]
    InvalidPair(String),
}

pub type Result<T> = std::result::Result<T, SpectralError>;

/// Affine pixel-to-wavelength map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavelengthGrid {
    pub start_nm: f64,
    pub end_nm: f64,
    pub n_pixels: usize,
}

impl WavelengthGrid {
    pub fn new(start_nm: f64, end_nm: f64, n_pixels: usize) -> Result<Self> {
        if !(start_nm.is_finite() && end_nm.is_finite()) || start_nm >= end_nm {
            return Err(SpectralError::InvalidGrid(format!(
                "start {start_nm} nm must be below end {end_nm} nm"
            )));
        }
        if n_pixels < 2 {
            return Err(SpectralError::InvalidGrid(format!(
                "need at least 2 pixels, got {n_pixels}"
            )));
        }
        Ok(Self {
            start_nm,
            end_nm,
            n_pixels,
        })
    }

    /// 1696 pixels over 250-850 nm.
    pub fn default_instrument() -> Self {
        Self::new(250.0, 850.0, 1696).unwrap()
    }

    /// Quarter-resolution grid (424 pixels) used for desk-scale runs.
    pub fn desk() -> Self {
        Self::new(250.0, 850.0, 424).unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.start_nm, self.end_nm, self.n_pixels).map(|_| ())
    }

    pub fn step_nm(&self) -> f64 {
        (self.end_nm - self.start_nm) / (self.n_pixels - 1) as f64
    }

    pub fn wavelength(&self, pixel: usize) -> f64 {
        self.start_nm + pixel as f64 * self.step_nm()
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        (0..self.n_pixels).map(|i| self.wavelength(i)).collect()
    }

    /// Pixel whose center is closest to `nm` (clamped to the grid).
    pub fn nearest_pixel(&self, nm: f64) -> usize {
        let t = ((nm - self.start_nm) / self.step_nm()).round();
        t.clamp(0.0, (self.n_pixels - 1) as f64) as usize
    }

    /// Indices of pixels whose center lies in `[lo_nm, hi_nm]`.
    pub fn pixels_in(&self, lo_nm: f64, hi_nm: f64) -> std::ops::Range<usize> {
        let step = self.step_nm();
        let first = ((lo_nm - self.start_nm) / step).ceil().max(0.0);
        let last = ((hi_nm - self.start_nm) / step).floor();
        if last < 0.0 || first > last || first >= self.n_pixels as f64 {
            return 0..0;
        }
        let mut a = first as usize;
        let mut b = (last as usize).min(self.n_pixels - 1);
        // Guard the rounding at the window edges.
        while a > 0 && self.wavelength(a - 1) >= lo_nm {
            a -= 1;
        }
        while a <= b && self.wavelength(a) < lo_nm {
            a += 1;
        }
        while b + 1 < self.n_pixels && self.wavelength(b + 1) <= hi_nm {
            b += 1;
        }
        while b >= a && self.wavelength(b) > hi_nm {
            if b == 0 {
                return 0..0;
            }
            b -= 1;
        }
        if a > b {
            0..0
        } else {
            a..b + 1
        }
    }
}

/// The (pressure, equivalence ratio) label of an acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasCondition {
    pub pressure_bar: f64,
    pub equivalence_ratio: f64,
}

impl GasCondition {
    pub fn new(pressure_bar: f64, equivalence_ratio: f64) -> Result<Self> {
        let c = Self {
            pressure_bar,
            equivalence_ratio,
        };
        c.check_envelope()?;
        Ok(c)
    }

    pub fn check_envelope(&self) -> Result<()> {
        let tol = 1e-12;
        let in_p = self.pressure_bar >= PRESSURE_RANGE_BAR.0 - tol
            && self.pressure_bar <= PRESSURE_RANGE_BAR.1 + tol;
        let in_phi = self.equivalence_ratio >= PHI_RANGE.0 - tol
            && self.equivalence_ratio <= PHI_RANGE.1 + tol;
        if in_p && in_phi {
            Ok(())
        } else {
            Err(SpectralError::OutOfEnvelope {
                pressure_bar: self.pressure_bar,
                equivalence_ratio: self.equivalence_ratio,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    RawCounts,
    DarkSubtracted,
    OhNormalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: WavelengthGrid,
    intensities: Vec<f64>,
    exposure_s: f64,
    stage: Stage,
}

impl Spectrum {
    pub fn new(
        grid: WavelengthGrid,
        intensities: Vec<f64>,
        exposure_s: f64,
        stage: Stage,
    ) -> Result<Self> {
        grid.validate()?;
        if intensities.len() != grid.n_pixels {
            return Err(SpectralError::LengthMismatch {
                expected: grid.n_pixels,
                got: intensities.len(),
            });
        }
        if !(exposure_s > 0.0 && exposure_s.is_finite()) {
            return Err(SpectralError::InvalidExposure(exposure_s));
        }
        Ok(Self {
            grid,
            intensities,
            exposure_s,
            stage,
        })
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn into_intensities(self) -> Vec<f64> {
        self.intensities
    }

    pub fn exposure_s(&self) -> f64 {
        self.exposure_s
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn len(&self) -> usize {
        self.intensities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensities.is_empty()
    }

    fn expect_stage(&self, expected: Stage) -> Result<()> {
        if self.stage == expected {
            Ok(())
        } else {
            Err(SpectralError::WrongStage {
                expected,
                got: self.stage,
            })
        }
    }

    fn with_values(&self, intensities: Vec<f64>, stage: Stage) -> Self {
        Self {
            grid: self.grid,
            intensities,
            exposure_s: self.exposure_s,
            stage,
        }
    }
}

/// Arithmetic mean over all pixels whose center lies in `[lo_nm, hi_nm]`.
pub fn band_mean(s: &Spectrum, lo_nm: f64, hi_nm: f64) -> Result<f64> {
    if !(lo_nm < hi_nm) {
        return Err(SpectralError::EmptyBand { lo_nm, hi_nm });
    }
    let range = s.grid.pixels_in(lo_nm, hi_nm);
    if range.is_empty() {
        return Err(SpectralError::EmptyBand { lo_nm, hi_nm });
    }
    let n = range.len() as f64;
    Ok(s.intensities[range].iter().sum::<f64>() / n)
}

/// Per-pixel subtraction of a mean dark frame. Negative results are kept.
pub fn dark_subtract(s: &Spectrum, mean_dark: &Spectrum) -> Result<Spectrum> {
    s.expect_stage(Stage::RawCounts)?;
    if s.grid != mean_dark.grid {
        return Err(SpectralError::GridMismatch);
    }
    if s.exposure_s != mean_dark.exposure_s {
        return Err(SpectralError::ExposureMismatch(
            s.exposure_s,
            mean_dark.exposure_s,
        ));
    }
    let values = s
        .intensities
        .iter()
        .zip(&mean_dark.intensities)
        .map(|(v, d)| v - d)
        .collect();
    Ok(s.with_values(values, Stage::DarkSubtracted))
}

/// Divides every pixel by the mean OH* band intensity (306-313 nm).
pub fn oh_normalize(s: &Spectrum) -> Result<Spectrum> {
    s.expect_stage(Stage::DarkSubtracted)?;
    let mean = band_mean(s, OH_BAND_LO_NM, OH_BAND_HI_NM)?;
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(SpectralError::NonPositiveBand(mean));
    }
    let values = s.intensities.iter().map(|v| v / mean).collect();
    Ok(s.with_values(values, Stage::OhNormalized))
}

/// Dark subtraction followed by OH* normalization.
pub fn preprocess(raw: &Spectrum, mean_dark: &Spectrum) -> Result<Spectrum> {
    oh_normalize(&dark_subtract(raw, mean_dark)?)
}

/// A short-exposure input and its long-exposure label at one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumPair {
    low_snr: Spectrum,
    high_snr: Spectrum,
    condition: GasCondition,
}

impl SpectrumPair {
    pub fn new(low_snr: Spectrum, high_snr: Spectrum, condition: GasCondition) -> Result<Self> {
        if low_snr.grid != high_snr.grid {
            return Err(SpectralError::GridMismatch);
        }
        low_snr.expect_stage(Stage::OhNormalized)?;
        high_snr.expect_stage(Stage::OhNormalized)?;
        if !(low_snr.exposure_s < high_snr.exposure_s) {
            return Err(SpectralError::InvalidPair(format!(
                "low-SNR exposure {} s must be shorter than high-SNR exposure {} s",
                low_snr.exposure_s, high_snr.exposure_s
            )));
        }
        Ok(Self {
            low_snr,
            high_snr,
            condition,
        })
    }

    pub fn low_snr(&self) -> &Spectrum {
        &self.low_snr
    }

    pub fn high_snr(&self) -> &Spectrum {
        &self.high_snr
    }

    pub fn condition(&self) -> GasCondition {
        self.condition
    }
}

pub fn check_augment_factor(factor: f64) -> Result<()> {
    if factor >= AUGMENT_RANGE.0 && factor <= AUGMENT_RANGE.1 {
        Ok(())
    } else {
        Err(SpectralError::FactorOutOfRange(factor))
    }
}

/// Scales both members of the pair by one shared factor.
pub fn augment_intensity(p: &SpectrumPair, factor: f64) -> Result<SpectrumPair> {
    check_augment_factor(factor)?;
    let scale = |s: &Spectrum| s.with_values(s.intensities.iter().map(|v| v * factor).collect(), s.stage);
    Ok(SpectrumPair {
        low_snr: scale(&p.low_snr),
        high_snr: scale(&p.high_snr),
        condition: p.condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> WavelengthGrid {
        WavelengthGrid::desk()
    }

    fn spectrum(values: Vec<f64>, stage: Stage) -> Spectrum {
        Spectrum::new(grid(), values, 0.2, stage).unwrap()
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(WavelengthGrid::new(850.0, 250.0, 10).is_err());
        assert!(WavelengthGrid::new(250.0, 850.0, 1).is_err());
        let g = WavelengthGrid::default_instrument();
        assert_eq!(g.wavelength(0), 250.0);
        assert!((g.wavelength(1695) - 850.0).abs() < 1e-9);
        let w = g.wavelengths();
        assert!(w.windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn pixels_in_matches_linear_scan() {
        for g in [grid(), WavelengthGrid::default_instrument(), WavelengthGrid::new(0.0, 9.0, 10).unwrap()] {
            for (lo, hi) in [(306.0, 313.0), (250.0, 251.0), (3.0, 3.0), (700.0, 850.0), (849.9, 900.0), (3.5, 3.9)] {
                let scan: Vec<usize> = (0..g.n_pixels)
                    .filter(|&i| g.wavelength(i) >= lo && g.wavelength(i) <= hi)
                    .collect();
                let got: Vec<usize> = g.pixels_in(lo, hi).collect();
                assert_eq!(scan, got, "grid {g:?} window [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn band_mean_examples() {
        let s = spectrum(vec![3.25; 424], Stage::RawCounts);
        assert_eq!(band_mean(&s, 400.0, 500.0).unwrap(), 3.25);

        let g = WavelengthGrid::new(0.0, 9.0, 10).unwrap();
        let mut v = vec![0.0; 10];
        v[4] = 7.5;
        let s = Spectrum::new(g, v, 1.0, Stage::RawCounts).unwrap();
        assert_eq!(band_mean(&s, 3.5, 4.5).unwrap(), 7.5);

        let v = vec![9.0, 1.0, 2.0, 3.0, 4.0, 9.0, 9.0, 9.0, 9.0, 9.0];
        let s = Spectrum::new(g, v, 1.0, Stage::RawCounts).unwrap();
        assert_eq!(band_mean(&s, 1.0, 4.0).unwrap(), 2.5);

        assert!(matches!(
            band_mean(&s, 3.2, 3.8),
            Err(SpectralError::EmptyBand { .. })
        ));
        assert!(band_mean(&s, 20.0, 30.0).is_err());
    }

    #[test]
    fn dark_subtract_examples() {
        let s = spectrum(vec![100.0; 424], Stage::RawCounts);
        let d = spectrum(vec![40.0; 424], Stage::RawCounts);
        let out = dark_subtract(&s, &d).unwrap();
        assert_eq!(out.stage(), Stage::DarkSubtracted);
        assert!(out.intensities().iter().all(|&v| v == 60.0));

        let zero = dark_subtract(&s, &s).unwrap();
        assert!(zero.intensities().iter().all(|&v| v == 0.0));

        // undershoot is kept
        let neg = dark_subtract(&d, &s).unwrap();
        assert!(neg.intensities().iter().all(|&v| v == -60.0));

        let other_exp = Spectrum::new(grid(), vec![40.0; 424], 0.4, Stage::RawCounts).unwrap();
        assert!(matches!(
            dark_subtract(&s, &other_exp),
            Err(SpectralError::ExposureMismatch(..))
        ));
        let other_grid = Spectrum::new(WavelengthGrid::default_instrument(), vec![0.0; 1696], 0.2, Stage::RawCounts).unwrap();
        assert_eq!(dark_subtract(&s, &other_grid), Err(SpectralError::GridMismatch));
        assert!(matches!(
            dark_subtract(&out, &d),
            Err(SpectralError::WrongStage { .. })
        ));
    }

    #[test]
    fn dark_subtract_is_additive_with_zero_dark() {
        let s = spectrum((0..424).map(|i| i as f64 * 0.5).collect(), Stage::RawCounts);
        let d = spectrum((0..424).map(|i| (i % 7) as f64).collect(), Stage::RawCounts);
        let once = dark_subtract(&s, &d).unwrap();
        let zero = spectrum(vec![0.0; 424], Stage::RawCounts);
        let relabeled = Spectrum::new(grid(), once.intensities().to_vec(), 0.2, Stage::RawCounts).unwrap();
        let twice = dark_subtract(&relabeled, &zero).unwrap();
        assert_eq!(once.intensities(), twice.intensities());
        assert_eq!(once.grid(), twice.grid());
    }

    #[test]
    fn oh_normalize_examples() {
        let s = spectrum(vec![8.0; 424], Stage::DarkSubtracted);
        let n = oh_normalize(&s).unwrap();
        assert!(n.intensities().iter().all(|&v| v == 1.0));
        assert_eq!(n.stage(), Stage::OhNormalized);

        let ramp = spectrum((0..424).map(|i| 1.0 + i as f64).collect(), Stage::DarkSubtracted);
        let n = oh_normalize(&ramp).unwrap();
        let m = band_mean(&n, OH_BAND_LO_NM, OH_BAND_HI_NM).unwrap();
        assert!((m - 1.0).abs() < 1e-9);

        // already unit band mean -> unchanged
        let again = oh_normalize(&Spectrum::new(grid(), n.intensities().to_vec(), 0.2, Stage::DarkSubtracted).unwrap()).unwrap();
        for (a, b) in again.intensities().iter().zip(n.intensities()) {
            assert!((a - b).abs() < 1e-12);
        }

        let bad = spectrum(vec![-1.0; 424], Stage::DarkSubtracted);
        assert!(matches!(oh_normalize(&bad), Err(SpectralError::NonPositiveBand(_))));
        let raw = spectrum(vec![1.0; 424], Stage::RawCounts);
        assert!(matches!(oh_normalize(&raw), Err(SpectralError::WrongStage { .. })));
    }

    fn pair(lo: f64, hi: f64) -> SpectrumPair {
        let x = Spectrum::new(grid(), vec![lo; 424], 0.2, Stage::OhNormalized).unwrap();
        let y = Spectrum::new(grid(), vec![hi; 424], 2.0, Stage::OhNormalized).unwrap();
        SpectrumPair::new(x, y, GasCondition::new(5.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn augment_examples() {
        let p = pair(1.0, 1.0);
        assert_eq!(augment_intensity(&p, 1.0).unwrap(), p);
        let a = augment_intensity(&p, 1.2).unwrap();
        assert!(a.low_snr().intensities().iter().all(|&v| v == 1.2));
        assert!(a.high_snr().intensities().iter().all(|&v| v == 1.2));
        assert_eq!(a.condition(), p.condition());
        assert!(matches!(
            augment_intensity(&p, 1.3),
            Err(SpectralError::FactorOutOfRange(_))
        ));
        assert!(augment_intensity(&p, 0.79).is_err());
    }

    #[test]
    fn pair_invariants() {
        let x = Spectrum::new(grid(), vec![1.0; 424], 2.0, Stage::OhNormalized).unwrap();
        let y = Spectrum::new(grid(), vec![1.0; 424], 0.2, Stage::OhNormalized).unwrap();
        let c = GasCondition::new(5.0, 1.0).unwrap();
        assert!(SpectrumPair::new(x.clone(), y.clone(), c).is_err());
        assert!(SpectrumPair::new(y.clone(), x.clone(), c).is_ok());
        let raw = Spectrum::new(grid(), vec![1.0; 424], 0.2, Stage::RawCounts).unwrap();
        assert!(SpectrumPair::new(raw, x, c).is_err());
    }

    #[test]
    fn envelope() {
        assert!(GasCondition::new(1.0, 0.8).is_ok());
        assert!(GasCondition::new(10.0, 1.2).is_ok());
        assert!(GasCondition::new(0.5, 1.0).is_err());
        assert!(GasCondition::new(5.0, 1.3).is_err());
    }
}
