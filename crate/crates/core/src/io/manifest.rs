//! On-disk dataset layout: `manifest.json` describing every record plus
//! `spectra.bin`, a flat blob of little-endian `f32` intensity arrays.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::IoError;
use crate::spectral::{self, GasCondition, Spectrum, Stage, WavelengthGrid};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "spectra.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Validation,
    Test,
}

impl Role {
    /// Conditions used for POD/kriging calibration (training plus the CNN
    /// validation hold-out).
    pub fn is_calibration(self) -> bool {
        matches!(self, Role::Train | Role::Validation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    LowSnr,
    HighSnr,
    Dark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub condition: GasCondition,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub kind: SpectrumKind,
    /// Index into `DatasetManifest::conditions`; `None` for dark frames.
    pub condition_index: Option<usize>,
    pub repeat: usize,
    pub exposure_s: f64,
    pub stage: Stage,
    /// Byte offset into the blob.
    pub offset: u64,
    /// Byte length in the blob (`4 * n_pixels`).
    pub length: u64,
    /// Random stream the acquisition was drawn from.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub grid: WavelengthGrid,
    pub generator_hash: String,
    pub root_seed: u64,
    pub n_ls: usize,
    pub n_hs: usize,
    pub tau_ls: f64,
    pub tau_hs: f64,
    pub conditions: Vec<ConditionEntry>,
    pub records: Vec<Record>,
}

impl DatasetManifest {
    pub fn pair_count(&self) -> usize {
        self.conditions.len() * self.n_ls * self.n_hs
    }

    pub fn conditions_with_role(&self, role: Role) -> Vec<usize> {
        (0..self.conditions.len())
            .filter(|&i| self.conditions[i].role == role)
            .collect()
    }

    pub fn validate(&self, blob_bytes: u64) -> Result<(), IoError> {
        let bad = |m: String| Err(IoError::Format(m));
        if self.format_version != DATASET_FORMAT_VERSION {
            return bad(format!("unsupported dataset format version {}", self.format_version));
        }
        self.grid.validate().map_err(|e| IoError::Format(e.to_string()))?;
        let expect_len = 4 * self.grid.n_pixels as u64;
        let mut spans: Vec<(u64, u64)> = Vec::with_capacity(self.records.len());
        for (i, r) in self.records.iter().enumerate() {
            if r.length != expect_len {
                return bad(format!("record {i} has length {} bytes, expected {expect_len}", r.length));
            }
            if r.offset + r.length > blob_bytes {
                return bad(format!("record {i} extends past the end of the blob"));
            }
            match (r.kind, r.condition_index) {
                (SpectrumKind::Dark, None) => {}
                (SpectrumKind::Dark, Some(_)) => return bad(format!("dark record {i} names a condition")),
                (_, Some(c)) if c < self.conditions.len() => {}
                _ => return bad(format!("record {i} has an invalid condition index")),
            }
            spans.push((r.offset, r.offset + r.length));
        }
        spans.sort_unstable();
        if spans.windows(2).any(|w| w[1].0 < w[0].1) {
            return bad("record blob ranges overlap".into());
        }
        Ok(())
    }
}

/// A manifest together with its in-memory blob.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub blob: Vec<f32>,
}

impl Dataset {
    pub fn record_values(&self, index: usize) -> &[f32] {
        let r = &self.manifest.records[index];
        let start = (r.offset / 4) as usize;
        &self.blob[start..start + (r.length / 4) as usize]
    }

    /// Record `index` as a spectrum at its stored stage.
    pub fn spectrum(&self, index: usize) -> Result<Spectrum, IoError> {
        let r = &self.manifest.records[index];
        let values: Vec<f64> = self.record_values(index).iter().map(|&v| v as f64).collect();
        let s = Spectrum::new(self.manifest.grid, values, r.exposure_s, r.stage)?;
        if r.stage == Stage::OhNormalized {
            // undo the f32 rounding of the band mean
            let relabeled = Spectrum::new(self.manifest.grid, s.into_intensities(), r.exposure_s, Stage::DarkSubtracted)?;
            return Ok(spectral::oh_normalize(&relabeled)?);
        }
        Ok(s)
    }

    /// Mean dark frame stored for exposure `tau_s`.
    pub fn mean_dark(&self, tau_s: f64) -> Option<Spectrum> {
        let idx = self
            .manifest
            .records
            .iter()
            .position(|r| r.kind == SpectrumKind::Dark && r.exposure_s == tau_s)?;
        self.spectrum(idx).ok()
    }

    /// Record `index` brought to `OhNormalized`, preprocessing raw counts
    /// with the stored dark frame of the same exposure.
    pub fn normalized(&self, index: usize) -> Result<Spectrum, IoError> {
        let s = self.spectrum(index)?;
        match s.stage() {
            Stage::OhNormalized => Ok(s),
            Stage::DarkSubtracted => Ok(spectral::oh_normalize(&s)?),
            Stage::RawCounts => {
                let dark = self.mean_dark(s.exposure_s()).ok_or_else(|| {
                    IoError::Format(format!("no dark frame stored for exposure {} s", s.exposure_s()))
                })?;
                Ok(spectral::preprocess(&s, &dark)?)
            }
        }
    }

    /// Indices of records of `kind` whose condition has `role`, in manifest order.
    pub fn records_where(&self, kind: SpectrumKind, role: impl Fn(Role) -> bool) -> Vec<usize> {
        self.manifest
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                r.kind == kind
                    && r.condition_index
                        .map(|c| role(self.manifest.conditions[c].role))
                        .unwrap_or(false)
            })
            .map(|(i, _)| i)
            .collect()
    }

    pub fn condition_of(&self, record: usize) -> Option<GasCondition> {
        self.manifest.records[record]
            .condition_index
            .map(|c| self.manifest.conditions[c].condition)
    }

    pub fn manifest_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn blob_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.blob.len() * 4);
        for v in &self.blob {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// SHA-256 over manifest and blob bytes.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.manifest_bytes());
        h.update(self.blob_bytes());
        hex::encode(h.finalize())
    }

    pub fn save(&self, dir: &Path) -> Result<(), IoError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST_FILE), self.manifest_bytes())?;
        fs::write(dir.join(BLOB_FILE), self.blob_bytes())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, IoError> {
        let manifest: DatasetManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)
            .map_err(|e| IoError::Format(format!("{}: {e}", dir.join(MANIFEST_FILE).display())))?;
        let bytes = fs::read(dir.join(BLOB_FILE))?;
        if bytes.len() % 4 != 0 {
            return Err(IoError::Format("blob length is not a multiple of 4".into()));
        }
        manifest.validate(bytes.len() as u64)?;
        let blob = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { manifest, blob })
    }
}
