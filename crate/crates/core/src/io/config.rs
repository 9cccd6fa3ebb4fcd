//! Shared TOML configuration for every pipeline stage. Unknown keys are
//! rejected; omitted sections take desk-scale defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::dnn::{AdamConfig, NetworkConfig, ScheduleConfig, TrainConfig};
use crate::kriging::KrigingOptions;
use crate::pod::DEFAULT_RANK;
use crate::spectral::{GasCondition, WavelengthGrid};
use crate::synthgen::{self, AcquisitionPlan, CcdConfig, EmitterModel, SamplingPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Root seed for every random stream.
    pub seed: u64,
    pub grid: GridSection,
    pub design: DesignSection,
    pub acquisition: AcquisitionSection,
    pub ccd: CcdSection,
    /// Replaces the built-in emitter model when present.
    pub emitter: Option<EmitterModel>,
    pub pod: PodSection,
    pub kriging: KrigingSection,
    pub network: NetworkSection,
    pub training: TrainingSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub start_nm: f64,
    pub end_nm: f64,
    pub n_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSection {
    /// Training conditions: full factorial levels.
    pub pressure_levels: usize,
    pub phi_levels: usize,
    /// Test conditions: Latin hypercube sample count.
    pub test_conditions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionSection {
    pub n_ls: usize,
    pub n_hs: usize,
    pub tau_ls: f64,
    pub tau_hs: f64,
    pub n_dark: usize,
    pub store_raw: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CcdSection {
    pub quantum_efficiency: f64,
    pub dark_current_eps: f64,
    pub read_noise_e: f64,
    /// Omit to calibrate against the OH* reference pixel.
    pub photon_flux_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PodSection {
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KrigingSection {
    pub theta_min: f64,
    pub theta_max: f64,
    pub grid_points: usize,
    pub refine_sweeps: usize,
    pub nugget: f64,
    /// Fit on condition-averaged long-exposure spectra instead of every one.
    pub average_hs: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub n_layers: usize,
    pub n_channels: usize,
    pub kernel_size: usize,
    pub downsample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub alpha: f64,
    /// Loss blend for the plain comparison network.
    pub plain_alpha: f64,
    pub validation_fraction: f64,
    pub augment_min: f64,
    pub augment_max: f64,
    pub adam: AdamConfig,
    pub schedule: ScheduleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfPoint {
    pub n_layers: usize,
    pub kernel_size: usize,
    pub downsample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Short exposures visited by the exposure sweep.
    pub exposures: Vec<f64>,
    /// Retrain the denoisers for every exposure instead of reusing them.
    pub retrain: bool,
    /// Architectures visited by the receptive-field sweep.
    pub rf_sweep: Vec<RfPoint>,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = WavelengthGrid::desk();
        Self { start_nm: g.start_nm, end_nm: g.end_nm, n_pixels: g.n_pixels }
    }
}

impl Default for DesignSection {
    fn default() -> Self {
        Self { pressure_levels: 5, phi_levels: 5, test_conditions: 9 }
    }
}

impl Default for AcquisitionSection {
    fn default() -> Self {
        let p = AcquisitionPlan::default();
        Self { n_ls: p.n_ls, n_hs: p.n_hs, tau_ls: p.tau_ls, tau_hs: p.tau_hs, n_dark: p.n_dark, store_raw: p.store_raw }
    }
}

impl Default for CcdSection {
    fn default() -> Self {
        Self {
            quantum_efficiency: synthgen::ccd::DEFAULT_QUANTUM_EFFICIENCY,
            dark_current_eps: synthgen::ccd::DEFAULT_DARK_CURRENT_EPS,
            read_noise_e: synthgen::ccd::DEFAULT_READ_NOISE_E,
            photon_flux_scale: None,
        }
    }
}

impl Default for PodSection {
    fn default() -> Self {
        Self { rank: DEFAULT_RANK }
    }
}

impl Default for KrigingSection {
    fn default() -> Self {
        let o = KrigingOptions::default();
        Self {
            theta_min: o.theta_min,
            theta_max: o.theta_max,
            grid_points: o.grid_points,
            refine_sweeps: o.refine_sweeps,
            nugget: o.nugget,
            average_hs: false,
        }
    }
}

impl Default for NetworkSection {
    /// Desk-scale DU+CNN.
    fn default() -> Self {
        Self { n_layers: 3, n_channels: 8, kernel_size: 7, downsample: 4 }
    }
}

impl Default for TrainingSection {
    /// Desk-scale run: 30 epochs of batch 8 under the full-scale schedule
    /// constants.
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: 30,
            batch_size: 8,
            alpha: t.alpha,
            plain_alpha: 0.0,
            validation_fraction: t.validation_fraction,
            augment_min: t.augment_min,
            augment_max: t.augment_max,
            adam: t.adam,
            schedule: t.schedule,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            exposures: vec![0.05, 0.2, 0.4],
            retrain: true,
            rf_sweep: [(2, 3, 1), (3, 7, 1), (3, 7, 4), (3, 15, 4), (3, 15, 8)]
                .iter()
                .map(|&(n_layers, kernel_size, downsample)| RfPoint { n_layers, kernel_size, downsample })
                .collect(),
        }
    }
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 2023,
            grid: GridSection::default(),
            design: DesignSection::default(),
            acquisition: AcquisitionSection::default(),
            ccd: CcdSection::default(),
            emitter: None,
            pod: PodSection::default(),
            kriging: KrigingSection::default(),
            network: NetworkSection::default(),
            training: TrainingSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl Config {
    /// Desk-scale defaults: 424 pixels, 5x5 training grid, 9 test conditions.
    pub fn desk() -> Self {
        Self::default()
    }

    /// Full-instrument scale: 1696 pixels, 50 + 30 conditions,
    /// 100 short x 10 long acquisitions, baseline network, 100 epochs.
    pub fn full_scale() -> Self {
        let g = WavelengthGrid::default_instrument();
        Self {
            grid: GridSection { start_nm: g.start_nm, end_nm: g.end_nm, n_pixels: g.n_pixels },
            design: DesignSection { pressure_levels: 5, phi_levels: 10, test_conditions: 30 },
            acquisition: AcquisitionSection { n_ls: 100, n_hs: 10, ..Default::default() },
            network: NetworkSection { n_layers: 7, n_channels: 32, kernel_size: 15, downsample: 16 },
            training: TrainingSection { epochs: 100, batch_size: 128, ..Default::default() },
            eval: EvalSection {
                rf_sweep: [(7, 15, 1), (7, 15, 4), (7, 15, 8), (7, 15, 16), (7, 15, 32)]
                    .iter()
                    .map(|&(n_layers, kernel_size, downsample)| RfPoint { n_layers, kernel_size, downsample })
                    .collect(),
                ..Default::default()
            },
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, IoError> {
        let cfg: Config = toml::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            IoError::Config(m) => IoError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), IoError> {
        let cfg = |m: String| IoError::Config(m);
        self.grid().map_err(|e| cfg(format!("grid: {e}")))?;
        if self.design.pressure_levels == 0 || self.design.phi_levels == 0 || self.design.test_conditions == 0 {
            return Err(cfg("design: level and sample counts must be at least 1".into()));
        }
        self.acquisition_plan().validate().map_err(|e| cfg(format!("acquisition: {e}")))?;
        self.ccd_config().validate().map_err(|e| cfg(format!("ccd: {e}")))?;
        self.emitter_model().validate().map_err(|e| cfg(format!("emitter: {e}")))?;
        if self.pod.rank == 0 {
            return Err(cfg("pod.rank must be at least 1".into()));
        }
        let k = &self.kriging;
        if !(k.theta_min > 0.0 && k.theta_min < k.theta_max && k.grid_points >= 2 && k.nugget >= 0.0) {
            return Err(cfg("kriging: need 0 < theta_min < theta_max, grid_points >= 2, nugget >= 0".into()));
        }
        self.network_config().validate().map_err(|e| cfg(format!("network: {e}")))?;
        self.train_config().validate().map_err(|e| cfg(format!("training: {e}")))?;
        if !(0.0..=1.0).contains(&self.training.plain_alpha) {
            return Err(cfg("training.plain_alpha must lie in [0, 1]".into()));
        }
        if self.eval.exposures.iter().any(|&t| !(t > 0.0 && t < self.acquisition.tau_hs)) {
            return Err(cfg("eval.exposures must be positive and shorter than acquisition.tau_hs".into()));
        }
        for p in &self.eval.rf_sweep {
            self.sweep_network(p).validate().map_err(|e| cfg(format!("eval.rf_sweep: {e}")))?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<WavelengthGrid, crate::spectral::SpectralError> {
        WavelengthGrid::new(self.grid.start_nm, self.grid.end_nm, self.grid.n_pixels)
    }

    pub fn emitter_model(&self) -> EmitterModel {
        self.emitter.clone().unwrap_or_default()
    }

    pub fn ccd_config(&self) -> CcdConfig {
        let mut c = CcdConfig::calibrated_for(&self.emitter_model());
        c.quantum_efficiency = self.ccd.quantum_efficiency;
        c.dark_current_eps = self.ccd.dark_current_eps;
        c.read_noise_e = self.ccd.read_noise_e;
        c.photon_flux_scale = match self.ccd.photon_flux_scale {
            Some(s) => s,
            // keep the reference electron rate independent of eta
            None => c.photon_flux_scale * synthgen::ccd::DEFAULT_QUANTUM_EFFICIENCY / self.ccd.quantum_efficiency,
        };
        c
    }

    pub fn acquisition_plan(&self) -> AcquisitionPlan {
        let a = &self.acquisition;
        AcquisitionPlan {
            n_ls: a.n_ls,
            n_hs: a.n_hs,
            tau_ls: a.tau_ls,
            tau_hs: a.tau_hs,
            n_dark: a.n_dark,
            store_raw: a.store_raw,
            seed: self.seed,
        }
    }

    pub fn training_plan(&self) -> SamplingPlan {
        SamplingPlan::full_factorial(self.design.pressure_levels, self.design.phi_levels)
    }

    pub fn test_plan(&self) -> SamplingPlan {
        SamplingPlan::latin_hypercube(self.design.test_conditions, self.seed)
    }

    pub fn conditions(&self) -> Result<(Vec<GasCondition>, Vec<GasCondition>), synthgen::SynthError> {
        Ok((synthgen::full_factorial(&self.training_plan())?, synthgen::latin_hypercube(&self.test_plan())?))
    }

    pub fn kriging_options(&self) -> KrigingOptions {
        let k = &self.kriging;
        KrigingOptions {
            theta_min: k.theta_min,
            theta_max: k.theta_max,
            grid_points: k.grid_points,
            refine_sweeps: k.refine_sweeps,
            nugget: k.nugget,
        }
    }

    pub fn network_config(&self) -> NetworkConfig {
        let n = &self.network;
        NetworkConfig {
            n_layers: n.n_layers,
            n_channels: n.n_channels,
            kernel_size: n.kernel_size,
            downsample: n.downsample,
            input_width: self.grid.n_pixels,
        }
    }

    pub fn sweep_network(&self, p: &RfPoint) -> NetworkConfig {
        NetworkConfig {
            n_layers: p.n_layers,
            kernel_size: p.kernel_size,
            downsample: p.downsample,
            ..self.network_config()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            adam: t.adam.clone(),
            schedule: t.schedule.clone(),
            alpha: t.alpha,
            validation_fraction: t.validation_fraction,
            augment_min: t.augment_min,
            augment_max: t.augment_max,
            seed: self.seed,
        }
    }

    /// Training setup of the plain comparison network.
    pub fn plain_train_config(&self) -> TrainConfig {
        TrainConfig { alpha: self.training.plain_alpha, ..self.train_config() }
    }
}
