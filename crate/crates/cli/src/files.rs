//! Output-directory layout, locking and plain-text spectrum tables.

use std::fs::{self, File, OpenOptions};
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use fes_core::io::{ArchiveKind, Config, ModelArchive};
use fes_core::WavelengthGrid;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const LOCK_FILE: &str = ".fes.lock";
pub const DATASET_CONFIG: &str = "config.toml";
pub const CALIBRATION_DOC: &str = "calibration.json";
pub const POD_ARCHIVE: &str = "pod.fesa";
pub const KRIGING_ARCHIVE: &str = "kriging.fesa";

pub fn denoiser_archive(scheme: &str) -> String {
    format!("{scheme}.fesa")
}

/// Exclusive writer lock on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
    _file: File,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(file) => Ok(Self { path, _file: file }),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(CliError::Io(format!(
                "{} is locked by another run (remove {} if that run is gone)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Written next to the POD and kriging archives so prediction can check
/// and preprocess inputs without the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDoc {
    pub grid: WavelengthGrid,
    pub dataset_hash: String,
    pub seed: u64,
    pub energy_fraction: Vec<f64>,
    pub cumulative_energy: f64,
    pub rec_pressure: f64,
    pub rec_phi: f64,
}

impl CalibrationDoc {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(CALIBRATION_DOC);
        let text = fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("serializable");
        text.push('\n');
        fs::write(dir.join(CALIBRATION_DOC), text)?;
        Ok(())
    }
}

/// Loads `--config`, else the config stored with the dataset, else the desk
/// defaults; `--seed` overrides the seed. The result is validated.
pub fn resolve_config(explicit: Option<&Path>, data_dir: Option<&Path>, seed: Option<u64>) -> Result<Config, CliError> {
    let mut cfg = match (explicit, data_dir.map(|d| d.join(DATASET_CONFIG))) {
        (Some(p), _) => Config::load(p)?,
        (None, Some(p)) if p.exists() => Config::load(&p)?,
        _ => Config::desk(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_archive(dir: &Path, name: &str, kind: ArchiveKind) -> Result<ModelArchive, CliError> {
    let path = dir.join(name);
    let a = ModelArchive::load(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    a.expect_kind(kind)?;
    Ok(a)
}

/// Fails when an archive was fitted on a different dataset.
pub fn check_provenance(a: &ModelArchive, name: &str, dataset_hash: &str) -> Result<(), CliError> {
    if a.provenance.dataset_hash != dataset_hash {
        return Err(CliError::usage(format!(
            "stale model: {name} was fitted on dataset {} but this dataset is {}",
            short(&a.provenance.dataset_hash),
            short(dataset_hash)
        )));
    }
    Ok(())
}

pub fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

/// One spectrum per line, values separated by tabs, commas or spaces.
/// Blank lines and lines starting with `#` are skipped.
pub fn read_spectra(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == '\t' || c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Io(format!("{}:{}: {e}", path.display(), ln + 1)))?;
        out.push(row);
    }
    Ok(out)
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(path)
}
