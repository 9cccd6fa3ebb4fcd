//! Evaluation harness: calibration of the POD/kriging surrogate, the
//! three-scheme comparison, and receptive-field and exposure sweeps.

pub mod metrics;
pub mod tables;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dnn::{self, ConditionSpectra, DenoiserNet, DnnError, NetworkConfig, TrainConfig, TrainOutcome};
use crate::io::{ConditionEntry, Dataset, IoError, Role, SpectrumKind};
use crate::kriging::{KrigingError, KrigingModel, KrigingOptions, Prediction};
use crate::pod::{self, PodError, PodModel};
use crate::spectral::{SpectralError, WavelengthGrid};
use crate::synthgen::{self, ccd, AcquisitionPlan, CcdConfig, EmitterModel, SynthError};

pub use metrics::{empirical_snr, metrics, PropertyMetrics};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no predictions to evaluate")]
    EmptyInput,
    #[error("repeated acquisitions have zero variance")]
    NotStochastic,
    #[error("dataset has no {0}")]
    MissingData(&'static str),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Pod(#[from] PodError),
    #[error(transparent)]
    Kriging(#[from] KrigingError),
    #[error(transparent)]
    Dnn(#[from] DnnError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// POD basis plus kriging surrogate fitted on calibration conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub pod: PodModel,
    pub kriging: KrigingModel,
}

/// Normalized long-exposure spectra of the calibration conditions with their
/// (P, phi) labels; optionally one condition-averaged spectrum per condition.
pub fn calibration_rows(ds: &Dataset, average_hs: bool) -> Result<(Vec<Vec<f64>>, Vec<[f64; 2]>), EvalError> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (ci, entry) in ds.manifest.conditions.iter().enumerate() {
        if !entry.role.is_calibration() {
            continue;
        }
        let mut hs = Vec::new();
        for (ri, r) in ds.manifest.records.iter().enumerate() {
            if r.kind == SpectrumKind::HighSnr && r.condition_index == Some(ci) {
                hs.push(ds.normalized(ri)?.into_intensities());
            }
        }
        let label = [entry.condition.pressure_bar, entry.condition.equivalence_ratio];
        if average_hs && !hs.is_empty() {
            let n = hs.len() as f64;
            let mut mean = vec![0.0; hs[0].len()];
            for s in &hs {
                mean.iter_mut().zip(s).for_each(|(m, v)| *m += v / n);
            }
            rows.push(mean);
            labels.push(label);
        } else {
            labels.extend(std::iter::repeat_n(label, hs.len()));
            rows.extend(hs);
        }
    }
    if rows.is_empty() {
        return Err(EvalError::MissingData("long-exposure calibration spectra"));
    }
    Ok((rows, labels))
}

impl Calibration {
    pub fn fit(ds: &Dataset, rank: usize, opts: &KrigingOptions, average_hs: bool) -> Result<Self, EvalError> {
        let (rows, labels) = calibration_rows(ds, average_hs)?;
        let pod = pod::fit(&rows, rank)?;
        let sites = rows.iter().map(|r| pod.normalized_coeffs(r)).collect::<Result<Vec<_>, _>>()?;
        let kriging = KrigingModel::fit(&sites, &labels, opts)?;
        Ok(Self { pod, kriging })
    }

    /// Predicted `[P, phi]` (and kriging variances) for one normalized spectrum.
    pub fn predict(&self, spectrum: &[f64]) -> Result<Prediction, EvalError> {
        let c = self.pod.normalized_coeffs(spectrum)?;
        Ok(self.kriging.predict(&c)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Short-exposure spectra as acquired.
    Raw,
    /// Denoised by the CNN without down/up-sampling.
    Plain,
    /// Denoised by the DU+CNN trained with the POD loss.
    Du,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Raw, Scheme::Plain, Scheme::Du];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Raw => "raw",
            Scheme::Plain => "plain",
            Scheme::Du => "du",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionStats {
    pub condition_index: usize,
    pub role: Role,
    pub pressure_bar: f64,
    pub equivalence_ratio: f64,
    pub n: usize,
    pub pressure_mean: f64,
    pub pressure_std: f64,
    pub phi_mean: f64,
    pub phi_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeResult {
    pub scheme: Scheme,
    pub rec_pressure: f64,
    pub rec_phi: f64,
    pub rep_pressure: f64,
    pub rep_phi: f64,
    pub rsd_pressure: f64,
    pub rsd_phi: f64,
    pub conditions: Vec<ConditionStats>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let s = if v.len() > 1 {
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    (m, s)
}

/// Denoises `spectra` in inference mode, 256 at a time.
pub fn denoise_all(net: &DenoiserNet, spectra: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, EvalError> {
    let w = net.config().input_width;
    let mut out = Vec::with_capacity(spectra.len());
    for chunk in spectra.chunks(256) {
        let x: Vec<f64> = chunk.iter().flat_map(|s| s.iter().copied()).collect();
        let y = net.infer(&x, chunk.len())?;
        out.extend(y.chunks(w).map(|c| c.to_vec()));
    }
    Ok(out)
}

/// Runs the short-exposure spectra of every calibration and test condition
/// through `denoiser` (when given) and the surrogate. REC comes from the
/// calibration conditions, REP and RSD from the test conditions.
pub fn evaluate_scheme(
    ds: &Dataset,
    calib: &Calibration,
    scheme: Scheme,
    denoiser: Option<&DenoiserNet>,
) -> Result<SchemeResult, EvalError> {
    let mut stats = Vec::new();
    let (mut cal_p, mut cal_phi, mut cal_t) = (Vec::new(), Vec::new(), Vec::new());
    let (mut test_p, mut test_phi, mut test_t) = (Vec::new(), Vec::new(), Vec::new());
    for (ci, entry) in ds.manifest.conditions.iter().enumerate() {
        let mut ls = Vec::new();
        for (ri, r) in ds.manifest.records.iter().enumerate() {
            if r.kind == SpectrumKind::LowSnr && r.condition_index == Some(ci) {
                ls.push(ds.normalized(ri)?.into_intensities());
            }
        }
        if ls.is_empty() {
            continue;
        }
        let inputs = match denoiser {
            Some(net) => denoise_all(net, &ls)?,
            None => ls,
        };
        let (mut p, mut phi) = (Vec::new(), Vec::new());
        for s in &inputs {
            let pred = calib.predict(s)?;
            p.push(pred.mean[0]);
            phi.push(pred.mean[1]);
        }
        let (pm, ps) = mean_std(&p);
        let (fm, fs) = mean_std(&phi);
        let c = entry.condition;
        stats.push(ConditionStats {
            condition_index: ci,
            role: entry.role,
            pressure_bar: c.pressure_bar,
            equivalence_ratio: c.equivalence_ratio,
            n: p.len(),
            pressure_mean: pm,
            pressure_std: ps,
            phi_mean: fm,
            phi_std: fs,
        });
        let t = [c.pressure_bar, c.equivalence_ratio];
        if entry.role == Role::Test {
            test_p.push(p);
            test_phi.push(phi);
            test_t.push(t);
        } else {
            cal_p.push(p);
            cal_phi.push(phi);
            cal_t.push(t);
        }
    }
    let truth = |t: &[[f64; 2]], i: usize| t.iter().map(|x| x[i]).collect::<Vec<_>>();
    let rec_p = metrics(&cal_p, &truth(&cal_t, 0))?;
    let rec_phi = metrics(&cal_phi, &truth(&cal_t, 1))?;
    let rep_p = metrics(&test_p, &truth(&test_t, 0))?;
    let rep_phi = metrics(&test_phi, &truth(&test_t, 1))?;
    Ok(SchemeResult {
        scheme,
        rec_pressure: rec_p.rel_error,
        rec_phi: rec_phi.rel_error,
        rep_pressure: rep_p.rel_error,
        rep_phi: rep_phi.rel_error,
        rsd_pressure: rep_p.rsd,
        rsd_phi: rep_phi.rsd,
        conditions: stats,
    })
}

/// Raw, plain-CNN and DU+CNN results in that order.
pub fn compare_schemes(
    ds: &Dataset,
    calib: &Calibration,
    plain: &DenoiserNet,
    du: &DenoiserNet,
) -> Result<Vec<SchemeResult>, EvalError> {
    Ok(vec![
        evaluate_scheme(ds, calib, Scheme::Raw, None)?,
        evaluate_scheme(ds, calib, Scheme::Plain, Some(plain))?,
        evaluate_scheme(ds, calib, Scheme::Du, Some(du))?,
    ])
}

/// Trains on the `Train` conditions of `ds`, validating on `Validation`.
pub fn train_on_dataset(
    ds: &Dataset,
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
    pod: Option<&PodModel>,
) -> Result<TrainOutcome, EvalError> {
    if ds.manifest.grid.n_pixels != net_cfg.input_width {
        return Err(DnnError::ShapeMismatch(format!(
            "network width {} vs dataset width {}",
            net_cfg.input_width, ds.manifest.grid.n_pixels
        ))
        .into());
    }
    let train = ConditionSpectra::from_dataset(ds, |r| r == Role::Train)?;
    let val = ConditionSpectra::from_dataset(ds, |r| r == Role::Validation)?;
    Ok(dnn::train(&train, &val, net_cfg, train_cfg, pod)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfRow {
    pub n_layers: usize,
    pub kernel_size: usize,
    pub downsample: usize,
    pub receptive_field: usize,
    /// Footprint measured on a positive-weight probe network.
    pub probe_footprint: usize,
    pub param_count: usize,
    pub rep_pressure: f64,
    pub rep_phi: f64,
    pub rsd_pressure: f64,
    pub rsd_phi: f64,
}

/// Trains one DU+CNN per configuration and tabulates test accuracy against
/// receptive field, sorted by receptive field.
pub fn rf_sweep(
    ds: &Dataset,
    calib: &Calibration,
    configs: &[NetworkConfig],
    train_cfg: &TrainConfig,
) -> Result<Vec<RfRow>, EvalError> {
    let mut rows = Vec::with_capacity(configs.len());
    for cfg in configs {
        let probe = DenoiserNet::with_positive_weights(*cfg, train_cfg.seed)?;
        let outcome = train_on_dataset(ds, cfg, train_cfg, Some(&calib.pod))?;
        let r = evaluate_scheme(ds, calib, Scheme::Du, Some(&outcome.net))?;
        rows.push(RfRow {
            n_layers: cfg.n_layers,
            kernel_size: cfg.kernel_size,
            downsample: cfg.downsample,
            receptive_field: dnn::receptive_field(cfg),
            probe_footprint: dnn::empirical_receptive_field(&probe)?,
            param_count: dnn::param_count(cfg),
            rep_pressure: r.rep_pressure,
            rep_phi: r.rep_phi,
            rsd_pressure: r.rsd_pressure,
            rsd_phi: r.rsd_phi,
        });
    }
    rows.sort_by_key(|r| r.receptive_field);
    Ok(rows)
}

/// Everything needed to regenerate a dataset at a different short exposure.
#[derive(Debug, Clone)]
pub struct GeneratorSetup {
    pub grid: WavelengthGrid,
    pub plan: AcquisitionPlan,
    pub ccd: CcdConfig,
    pub model: EmitterModel,
    pub conditions: Vec<ConditionEntry>,
}

impl GeneratorSetup {
    pub fn build(&self) -> Result<Dataset, EvalError> {
        Ok(synthgen::build_dataset(&self.conditions, &self.plan, &self.grid, &self.ccd, &self.model)?)
    }

    /// Empirical SNR of the OH* reference pixel at 10 bar, phi = 1 over
    /// `repeats` acquisitions of exposure `tau_s`.
    pub fn reference_snr(&self, tau_s: f64, repeats: usize) -> Result<f64, EvalError> {
        let cond = ccd::oh_reference_condition();
        let flux = synthgen::clean_spectrum(&cond, &self.grid, &self.model)?;
        let stream = 0x534e_5200_0000 | (tau_s * 1e6).round() as u64;
        let mut rng = ccd::stream_rng(self.plan.seed, stream);
        let mut spectra = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            spectra.push(ccd::acquire(&flux, &self.grid, tau_s, &self.ccd, &mut rng)?);
        }
        let dark = self.ccd.expected_dark(&self.grid, tau_s);
        empirical_snr(&spectra, &dark, self.grid.nearest_pixel(ccd::OH_REFERENCE_NM))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureRow {
    pub tau_s: f64,
    pub snr: f64,
    /// `100 - REP` per scheme for pressure and equivalence ratio.
    pub accuracy: Vec<(Scheme, f64, f64)>,
}

pub struct ExposureSweep<'a> {
    pub taus: &'a [f64],
    pub snr_repeats: usize,
    pub du: (&'a NetworkConfig, &'a TrainConfig),
    pub plain: (&'a NetworkConfig, &'a TrainConfig),
    /// Trained networks to reuse at every exposure instead of retraining.
    pub reuse: Option<(&'a DenoiserNet, &'a DenoiserNet)>,
}

/// Regenerates the short-exposure data at each exposure (long-exposure
/// spectra and the calibration are unchanged) and reports accuracy per
/// scheme.
pub fn exposure_sweep(setup: &GeneratorSetup, calib: &Calibration, sweep: &ExposureSweep) -> Result<Vec<ExposureRow>, EvalError> {
    let mut rows = Vec::new();
    for &tau in sweep.taus {
        let s = GeneratorSetup { plan: AcquisitionPlan { tau_ls: tau, ..setup.plan.clone() }, ..setup.clone() };
        let ds = s.build()?;
        let (plain, du) = match sweep.reuse {
            Some((p, d)) => (p.clone(), d.clone()),
            None => (
                train_on_dataset(&ds, sweep.plain.0, sweep.plain.1, Some(&calib.pod))?.net,
                train_on_dataset(&ds, sweep.du.0, sweep.du.1, Some(&calib.pod))?.net,
            ),
        };
        let results = compare_schemes(&ds, calib, &plain, &du)?;
        rows.push(ExposureRow {
            tau_s: tau,
            snr: s.reference_snr(tau, sweep.snr_repeats)?,
            accuracy: results.iter().map(|r| (r.scheme, 100.0 - r.rep_pressure, 100.0 - r.rep_phi)).collect(),
        });
    }
    Ok(rows)
}
