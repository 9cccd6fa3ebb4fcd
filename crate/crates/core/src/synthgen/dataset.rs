use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ccd::{acquire, mean_dark, stream_rng, CcdConfig};
use super::emitter::{clean_spectrum, EmitterModel};
use super::SynthError;
use crate::io::manifest::{
    ConditionEntry, Dataset, DatasetManifest, Record, Role, SpectrumKind, DATASET_FORMAT_VERSION,
};
use crate::spectral::{self, GasCondition, Stage, WavelengthGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionPlan {
    pub n_ls: usize,
    pub n_hs: usize,
    pub tau_ls: f64,
    pub tau_hs: f64,
    /// Frames averaged into each mean dark.
    pub n_dark: usize,
    /// Keep raw counts in the blob instead of normalized spectra.
    pub store_raw: bool,
    pub seed: u64,
}

impl Default for AcquisitionPlan {
    /// Desk scale: 20 short (0.2 s) and 2 long (2 s) acquisitions per condition.
    fn default() -> Self {
        Self {
            n_ls: 20,
            n_hs: 2,
            tau_ls: 0.2,
            tau_hs: 2.0,
            n_dark: 100,
            store_raw: false,
            seed: 2023,
        }
    }
}

impl AcquisitionPlan {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_ls == 0 || self.n_hs == 0 || self.n_dark == 0 {
            return Err(SynthError::BadPlan("acquisition counts must be at least 1".into()));
        }
        for t in [self.tau_ls, self.tau_hs] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(SynthError::InvalidExposure(t));
            }
        }
        if !(self.tau_ls < self.tau_hs) {
            return Err(SynthError::BadPlan("tau_ls must be shorter than tau_hs".into()));
        }
        Ok(())
    }
}

fn stream_id(condition: usize, kind: SpectrumKind, repeat: usize) -> u64 {
    let k = match kind {
        SpectrumKind::LowSnr => 1u64,
        SpectrumKind::HighSnr => 2,
        SpectrumKind::Dark => 3,
    };
    ((condition as u64 + 1) << 32) | (k << 24) | repeat as u64
}

fn dark_stream(tau_index: u64) -> u64 {
    tau_index + 1
}

/// Training conditions become `Train` except a seeded draw of whole
/// conditions (`round(fraction * n)`, at least one when `fraction > 0` and
/// more than one training condition exists) held out as `Validation`.
pub fn assign_roles(
    train: &[GasCondition],
    test: &[GasCondition],
    validation_fraction: f64,
    seed: u64,
) -> Vec<ConditionEntry> {
    let mut n_val = (validation_fraction * train.len() as f64).round() as usize;
    if validation_fraction > 0.0 && train.len() > 1 {
        n_val = n_val.clamp(1, train.len() - 1);
    } else {
        n_val = 0;
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut stream_rng(seed, 0x5641_4c00));
    let held: std::collections::HashSet<usize> = order.into_iter().take(n_val).collect();
    train
        .iter()
        .enumerate()
        .map(|(i, &condition)| ConditionEntry {
            condition,
            role: if held.contains(&i) { Role::Validation } else { Role::Train },
        })
        .chain(test.iter().map(|&condition| ConditionEntry { condition, role: Role::Test }))
        .collect()
}

#[derive(Serialize)]
struct GeneratorIdentity<'a> {
    grid: &'a WavelengthGrid,
    plan: &'a AcquisitionPlan,
    ccd: &'a CcdConfig,
    model: &'a EmitterModel,
}

pub fn generator_hash(
    grid: &WavelengthGrid,
    plan: &AcquisitionPlan,
    ccd: &CcdConfig,
    model: &EmitterModel,
) -> String {
    let doc = serde_json::to_vec(&GeneratorIdentity { grid, plan, ccd, model }).expect("serializable");
    hex::encode(Sha256::digest(doc))
}

/// Generates `n_ls` short and `n_hs` long acquisitions per condition plus one
/// mean dark per exposure. Pairs are the full short x long cross product of
/// each condition.
pub fn build_dataset(
    conditions: &[ConditionEntry],
    plan: &AcquisitionPlan,
    grid: &WavelengthGrid,
    ccd: &CcdConfig,
    model: &EmitterModel,
) -> Result<Dataset, SynthError> {
    plan.validate()?;
    ccd.validate()?;
    model.validate()?;
    grid.validate()?;
    let w = grid.n_pixels;
    let bytes = 4 * w as u64;
    let mut records = Vec::new();
    let mut blob: Vec<f32> = Vec::new();
    let push = |records: &mut Vec<Record>, blob: &mut Vec<f32>, mut rec: Record, values: &[f64]| {
        rec.offset = blob.len() as u64 * 4;
        rec.length = bytes;
        blob.extend(values.iter().map(|&v| v as f32));
        records.push(rec);
    };

    let mut darks = Vec::new();
    for (ti, &tau) in [plan.tau_ls, plan.tau_hs].iter().enumerate() {
        let seed = dark_stream(ti as u64);
        let dark = mean_dark(grid, tau, ccd, plan.n_dark, &mut stream_rng(plan.seed, seed))?;
        let rec = Record {
            kind: SpectrumKind::Dark,
            condition_index: None,
            repeat: 0,
            exposure_s: tau,
            stage: Stage::RawCounts,
            offset: 0,
            length: 0,
            seed,
        };
        push(&mut records, &mut blob, rec, dark.intensities());
        darks.push(dark);
    }

    for (ci, entry) in conditions.iter().enumerate() {
        let flux = clean_spectrum(&entry.condition, grid, model)?;
        for (kind, n, tau, dark) in [
            (SpectrumKind::LowSnr, plan.n_ls, plan.tau_ls, &darks[0]),
            (SpectrumKind::HighSnr, plan.n_hs, plan.tau_hs, &darks[1]),
        ] {
            for r in 0..n {
                let seed = stream_id(ci, kind, r);
                let raw = acquire(&flux, grid, tau, ccd, &mut stream_rng(plan.seed, seed))?;
                let stored = if plan.store_raw {
                    raw
                } else {
                    spectral::preprocess(&raw, dark)?
                };
                let rec = Record {
                    kind,
                    condition_index: Some(ci),
                    repeat: r,
                    exposure_s: tau,
                    stage: stored.stage(),
                    offset: 0,
                    length: 0,
                    seed,
                };
                push(&mut records, &mut blob, rec, stored.intensities());
            }
        }
    }

    Ok(Dataset {
        manifest: DatasetManifest {
            format_version: DATASET_FORMAT_VERSION,
            grid: *grid,
            generator_hash: generator_hash(grid, plan, ccd, model),
            root_seed: plan.seed,
            n_ls: plan.n_ls,
            n_hs: plan.n_hs,
            tau_ls: plan.tau_ls,
            tau_hs: plan.tau_hs,
            conditions: conditions.to_vec(),
            records,
        },
        blob,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(n: usize) -> Vec<ConditionEntry> {
        (0..n)
            .map(|i| ConditionEntry {
                condition: GasCondition::new(1.0 + (i % 10) as f64, 0.8 + 0.08 * (i / 10) as f64).unwrap(),
                role: Role::Train,
            })
            .collect()
    }

    #[test]
    fn pair_counts() {
        let model = EmitterModel::default();
        let ccd = CcdConfig::calibrated_for(&model);
        let grid = WavelengthGrid::new(250.0, 850.0, 64).unwrap();
        let plan = AcquisitionPlan { n_ls: 1, n_hs: 1, n_dark: 2, ..Default::default() };
        let d = build_dataset(&entries(1), &plan, &grid, &ccd, &model).unwrap();
        assert_eq!(d.manifest.pair_count(), 1);
        assert_eq!(d.manifest.records.len(), 4);
        d.manifest.validate(d.blob.len() as u64 * 4).unwrap();

        let plan = AcquisitionPlan { n_ls: 20, n_hs: 2, n_dark: 2, ..Default::default() };
        let d = build_dataset(&entries(3), &plan, &grid, &ccd, &model).unwrap();
        assert_eq!(d.manifest.pair_count(), 120);
        // full-scale arithmetic
        let m = DatasetManifest { conditions: vec![entries(1)[0].clone(); 80], n_ls: 100, n_hs: 10, ..d.manifest.clone() };
        assert_eq!(m.pair_count(), 80_000);
        let m = DatasetManifest { conditions: vec![entries(1)[0].clone(); 25], n_ls: 20, n_hs: 2, ..d.manifest };
        assert_eq!(m.pair_count(), 1_000);
    }

    #[test]
    fn deterministic_and_normalized() {
        let model = EmitterModel::default();
        let ccd = CcdConfig::calibrated_for(&model);
        let grid = WavelengthGrid::desk();
        let plan = AcquisitionPlan { n_ls: 2, n_hs: 1, n_dark: 4, ..Default::default() };
        let a = build_dataset(&entries(2), &plan, &grid, &ccd, &model).unwrap();
        let b = build_dataset(&entries(2), &plan, &grid, &ccd, &model).unwrap();
        assert_eq!(a, b);
        for i in a.records_where(SpectrumKind::LowSnr, |_| true) {
            let s = a.spectrum(i).unwrap();
            assert_eq!(s.stage(), Stage::OhNormalized);
            let m = spectral::band_mean(&s, 306.0, 313.0).unwrap();
            assert!((m - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn raw_storage_preprocesses_on_read() {
        let model = EmitterModel::default();
        let ccd = CcdConfig::calibrated_for(&model);
        let grid = WavelengthGrid::desk();
        let plan = AcquisitionPlan { n_ls: 1, n_hs: 1, n_dark: 4, ..Default::default() };
        let norm = build_dataset(&entries(1), &plan, &grid, &ccd, &model).unwrap();
        let raw = build_dataset(&entries(1), &AcquisitionPlan { store_raw: true, ..plan }, &grid, &ccd, &model).unwrap();
        let i = raw.records_where(SpectrumKind::LowSnr, |_| true)[0];
        assert_eq!(raw.spectrum(i).unwrap().stage(), Stage::RawCounts);
        let a = raw.normalized(i).unwrap();
        let b = norm.normalized(i).unwrap();
        for (x, y) in a.intensities().iter().zip(b.intensities()) {
            assert!((x - y).abs() < 1e-4 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn roles_partition_conditions() {
        let train: Vec<GasCondition> = entries(50).iter().map(|e| e.condition).collect();
        let test = vec![GasCondition::new(2.5, 0.9).unwrap(); 3];
        let r = assign_roles(&train, &test, 0.1, 4);
        assert_eq!(r.len(), 53);
        assert_eq!(r.iter().filter(|e| e.role == Role::Validation).count(), 5);
        assert_eq!(r.iter().filter(|e| e.role == Role::Test).count(), 3);
        assert_eq!(r, assign_roles(&train, &test, 0.1, 4));
        let small = assign_roles(&train[..25], &[], 0.1, 4);
        assert_eq!(small.iter().filter(|e| e.role == Role::Validation).count(), 3);
    }

    #[test]
    fn bad_plan_rejected() {
        let model = EmitterModel::default();
        let ccd = CcdConfig::calibrated_for(&model);
        let grid = WavelengthGrid::desk();
        let plan = AcquisitionPlan { n_ls: 0, ..Default::default() };
        assert!(build_dataset(&entries(1), &plan, &grid, &ccd, &model).is_err());
        let plan = AcquisitionPlan { tau_ls: 3.0, ..Default::default() };
        assert!(build_dataset(&entries(1), &plan, &grid, &ccd, &model).is_err());
    }
}
