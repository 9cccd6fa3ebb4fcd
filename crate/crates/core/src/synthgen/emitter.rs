//! Clean flame-emission model.
//!
//! Each band is a sum of Gaussian components around a head wavelength with a
//! separable amplitude law `A(P, phi)` and a pressure-broadened width. The
//! default table reproduces the qualitative trends of methane-air
//! chemiluminescence: radical bands (OH*, CH*, C2*) weaken with pressure,
//! CH* and C2* strengthen with equivalence ratio, H2O* and the CO2*
//! continuum grow with pressure. The constants are model choices, not
//! measured values.

use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::spectral::{GasCondition, WavelengthGrid, PHI_RANGE, PRESSURE_RANGE_BAR};

/// Version tag of the default constant table.
pub const DEFAULT_MODEL_VERSION: &str = "methane-air-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Decreasing,
}

/// `A(P, phi) = scale * P^pressure_exponent * exp(phi_linear (phi - 1) + phi_quadratic (phi - 1)^2)`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeLaw {
    pub scale: f64,
    pub pressure_exponent: f64,
    pub phi_linear: f64,
    #[serde(default)]
    pub phi_quadratic: f64,
}

impl AmplitudeLaw {
    pub fn eval(&self, cond: &GasCondition) -> f64 {
        let d = cond.equivalence_ratio - 1.0;
        self.scale
            * cond.pressure_bar.powf(self.pressure_exponent)
            * (self.phi_linear * d + self.phi_quadratic * d * d).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineComponent {
    pub offset_nm: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandLaw {
    pub name: String,
    pub center_nm: f64,
    /// Gaussian sigma of every component at 1 bar.
    pub base_width_nm: f64,
    /// Fractional sigma growth per bar above 1 bar.
    #[serde(default)]
    pub broadening_per_bar: f64,
    pub components: Vec<LineComponent>,
    pub amplitude: AmplitudeLaw,
    pub pressure_trend: Trend,
    pub phi_trend: Trend,
}

impl BandLaw {
    pub fn width_nm(&self, pressure_bar: f64) -> f64 {
        self.base_width_nm * (1.0 + self.broadening_per_bar * (pressure_bar - 1.0))
    }

    /// Peak-normalized line shape at `nm` for the given width.
    pub fn profile(&self, nm: f64, width_nm: f64) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let z = (nm - self.center_nm - c.offset_nm) / width_nm;
                c.weight * (-0.5 * z * z).exp()
            })
            .sum()
    }

    pub fn rate(&self, nm: f64, cond: &GasCondition) -> f64 {
        self.amplitude.eval(cond) * self.profile(nm, self.width_nm(cond.pressure_bar))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterModel {
    pub version: String,
    pub bands: Vec<BandLaw>,
    /// Broad continuum terms (CO2* and similar).
    pub continuum: Vec<BandLaw>,
    /// Flat positive floor shared by all pixels.
    pub floor: AmplitudeLaw,
}

fn comps(list: &[(f64, f64)]) -> Vec<LineComponent> {
    list.iter()
        .map(|&(offset_nm, weight)| LineComponent { offset_nm, weight })
        .collect()
}

fn law(scale: f64, pressure_exponent: f64, phi_linear: f64) -> AmplitudeLaw {
    AmplitudeLaw {
        scale,
        pressure_exponent,
        phi_linear,
        phi_quadratic: 0.0,
    }
}

impl Default for EmitterModel {
    fn default() -> Self {
        use Trend::*;
        let oh = BandLaw {
            name: "OH*".into(),
            center_nm: 306.4,
            base_width_nm: 1.0,
            broadening_per_bar: 0.03,
            // band head at 306.4 nm degrading to the red through 313 nm
            components: comps(&[(0.0, 1.0), (1.3, 0.8), (2.6, 0.6), (4.0, 0.4), (5.6, 0.25)]),
            amplitude: law(3200.0, -0.45, 0.6),
            pressure_trend: Decreasing,
            phi_trend: Increasing,
        };
        let ch = BandLaw {
            name: "CH*".into(),
            center_nm: 431.4,
            base_width_nm: 1.2,
            broadening_per_bar: 0.03,
            components: comps(&[(0.0, 1.0), (-2.0, 0.35), (2.0, 0.3)]),
            amplitude: law(2600.0, -0.55, 3.5),
            pressure_trend: Decreasing,
            phi_trend: Increasing,
        };
        let c2 = BandLaw {
            name: "C2*".into(),
            center_nm: 516.5,
            base_width_nm: 1.4,
            broadening_per_bar: 0.03,
            components: comps(&[(0.0, 1.0), (-3.0, 0.5), (-42.8, 0.55), (47.0, 0.35)]),
            amplitude: law(2000.0, -0.6, 5.0),
            pressure_trend: Decreasing,
            phi_trend: Increasing,
        };
        let h2o = BandLaw {
            name: "H2O*".into(),
            center_nm: 780.0,
            base_width_nm: 16.0,
            broadening_per_bar: 0.01,
            components: comps(&[(-60.0, 0.7), (-15.0, 0.9), (20.0, 1.0), (55.0, 0.8)]),
            amplitude: law(260.0, 0.55, 0.8),
            pressure_trend: Increasing,
            phi_trend: Increasing,
        };
        let co2 = BandLaw {
            name: "CO2*".into(),
            center_nm: 430.0,
            base_width_nm: 110.0,
            broadening_per_bar: 0.0,
            components: comps(&[(0.0, 1.0)]),
            amplitude: law(700.0, 0.35, -0.8),
            pressure_trend: Increasing,
            phi_trend: Decreasing,
        };
        Self {
            version: DEFAULT_MODEL_VERSION.into(),
            bands: vec![oh, ch, c2, h2o],
            continuum: vec![co2],
            floor: law(60.0, 0.2, 0.0),
        }
    }
}

impl EmitterModel {
    /// Photon flux at `nm` in model units (photons/s per pixel before the CCD scale).
    pub fn rate_at(&self, nm: f64, cond: &GasCondition) -> f64 {
        self.bands
            .iter()
            .chain(&self.continuum)
            .map(|b| b.rate(nm, cond))
            .sum::<f64>()
            + self.floor.eval(cond)
    }

    pub fn band(&self, name: &str) -> Option<&BandLaw> {
        self.bands.iter().chain(&self.continuum).find(|b| b.name == name)
    }

    /// Checks positivity of every law and the declared monotone trends on a
    /// 20x20 grid over the supported envelope.
    pub fn validate(&self) -> Result<(), SynthError> {
        let n = 20;
        let ps: Vec<f64> = (0..n)
            .map(|i| PRESSURE_RANGE_BAR.0 + (PRESSURE_RANGE_BAR.1 - PRESSURE_RANGE_BAR.0) * i as f64 / (n - 1) as f64)
            .collect();
        let phis: Vec<f64> = (0..n)
            .map(|i| PHI_RANGE.0 + (PHI_RANGE.1 - PHI_RANGE.0) * i as f64 / (n - 1) as f64)
            .collect();
        let cond = |p: f64, phi: f64| GasCondition {
            pressure_bar: p,
            equivalence_ratio: phi,
        };
        let bad = |msg: String| Err(SynthError::InvalidModel(msg));
        for b in self.bands.iter().chain(&self.continuum) {
            if b.components.is_empty() || b.components.iter().any(|c| !(c.weight > 0.0)) {
                return bad(format!("band {} needs positive component weights", b.name));
            }
            if !(b.base_width_nm > 0.0) || b.broadening_per_bar < 0.0 {
                return bad(format!("band {} has a non-positive or narrowing width law", b.name));
            }
            for &p in &ps {
                for &phi in &phis {
                    let a = b.amplitude.eval(&cond(p, phi));
                    if !(a > 0.0 && a.is_finite()) {
                        return bad(format!("band {} amplitude not positive at P={p}, phi={phi}", b.name));
                    }
                }
            }
            let ordered = |a: f64, b: f64, t: Trend| match t {
                Trend::Increasing => b > a,
                Trend::Decreasing => b < a,
            };
            for &phi in &phis {
                for w in ps.windows(2) {
                    let (a0, a1) = (b.amplitude.eval(&cond(w[0], phi)), b.amplitude.eval(&cond(w[1], phi)));
                    if !ordered(a0, a1, b.pressure_trend) {
                        return bad(format!("band {} violates its pressure trend", b.name));
                    }
                }
            }
            for &p in &ps {
                for w in phis.windows(2) {
                    let (a0, a1) = (b.amplitude.eval(&cond(p, w[0])), b.amplitude.eval(&cond(p, w[1])));
                    if !ordered(a0, a1, b.phi_trend) {
                        return bad(format!("band {} violates its equivalence-ratio trend", b.name));
                    }
                }
            }
        }
        for &p in &ps {
            if !(self.floor.eval(&cond(p, 1.0)) > 0.0) {
                return bad("floor must be positive".into());
            }
        }
        Ok(())
    }
}

/// Deterministic noise-free photon flux per pixel for `cond`.
pub fn clean_spectrum(
    cond: &GasCondition,
    grid: &WavelengthGrid,
    model: &EmitterModel,
) -> Result<Vec<f64>, SynthError> {
    cond.check_envelope()?;
    Ok((0..grid.n_pixels)
        .map(|i| model.rate_at(grid.wavelength(i), cond))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(p: f64, phi: f64) -> GasCondition {
        GasCondition::new(p, phi).unwrap()
    }

    #[test]
    fn default_model_is_valid() {
        EmitterModel::default().validate().unwrap();
    }

    #[test]
    fn ch_grows_with_phi() {
        let m = EmitterModel::default();
        let g = WavelengthGrid::default_instrument();
        let px = g.nearest_pixel(431.4);
        let lean = clean_spectrum(&c(5.0, 0.8), &g, &m).unwrap();
        let rich = clean_spectrum(&c(5.0, 1.2), &g, &m).unwrap();
        assert!(rich[px] > lean[px]);
    }

    #[test]
    fn water_band_grows_with_pressure() {
        let m = EmitterModel::default();
        let g = WavelengthGrid::default_instrument();
        let r = g.pixels_in(700.0, 850.0);
        let mean = |v: &[f64]| v[r.clone()].iter().sum::<f64>() / r.len() as f64;
        let low = clean_spectrum(&c(1.0, 1.0), &g, &m).unwrap();
        let high = clean_spectrum(&c(10.0, 1.0), &g, &m).unwrap();
        assert!(mean(&high) > mean(&low));
    }

    #[test]
    fn deterministic_and_positive() {
        let m = EmitterModel::default();
        let g = WavelengthGrid::desk();
        let a = clean_spectrum(&c(3.3, 0.93), &g, &m).unwrap();
        let b = clean_spectrum(&c(3.3, 0.93), &g, &m).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn out_of_envelope_rejected() {
        let m = EmitterModel::default();
        let g = WavelengthGrid::desk();
        let bad = GasCondition {
            pressure_bar: 12.0,
            equivalence_ratio: 1.0,
        };
        assert!(matches!(clean_spectrum(&bad, &g, &m), Err(SynthError::Spectral(_))));
    }

    #[test]
    fn widths_non_decreasing_in_pressure() {
        let m = EmitterModel::default();
        for b in m.bands.iter().chain(&m.continuum) {
            assert!(b.width_nm(10.0) >= b.width_nm(1.0));
        }
    }

    #[test]
    fn validation_catches_trend_violation() {
        let mut m = EmitterModel::default();
        m.bands[1].amplitude.phi_linear = -1.0;
        assert!(m.validate().is_err());
        let mut m = EmitterModel::default();
        m.bands[0].amplitude.scale = 0.0;
        assert!(m.validate().is_err());
    }
}
