//! One function per CLI verb.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fes_core::dnn::train::Checkpoint;
use fes_core::dnn::{self, DenoiserNet, NetworkConfig, TrainConfig};
use fes_core::eval::{self, tables, Calibration, ExposureSweep, GeneratorSetup, SchemeResult, Scheme};
use fes_core::io::{ArchiveKind, Config, Dataset, Provenance, Role};
use fes_core::kriging::KrigingModel;
use fes_core::pod::PodModel;
use fes_core::spectral::{self, Spectrum, Stage};
use fes_core::synthgen::dataset::generator_hash;
use fes_core::synthgen::{assign_roles, build_dataset};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::files::*;

pub const SCHEMES_TABLE: &str = "schemes.tsv";
pub const CONDITIONS_TABLE: &str = "conditions.tsv";
pub const SUMMARY_DOC: &str = "summary.json";
pub const RF_TABLE: &str = "rf.tsv";
pub const EXPOSURE_TABLE: &str = "exposure.tsv";
pub const REPORT_DOC: &str = "report.md";

const SNR_REPEATS: usize = 1000;

fn load_dataset(dir: &Path) -> Result<Dataset, CliError> {
    Dataset::load(dir).map_err(|e| match e {
        fes_core::io::IoError::Io(io) => CliError::Io(format!("dataset {}: {io}", dir.display())),
        other => other.into(),
    })
}

fn dir_size(dir: &Path) -> Result<u64, CliError> {
    let mut total = 0;
    for e in fs::read_dir(dir)? {
        let m = e?.metadata()?;
        if m.is_file() {
            total += m.len();
        }
    }
    Ok(total)
}

pub fn gen(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let _lock = OutputLock::acquire(out)?;
    let (train, test) = cfg.conditions()?;
    let roles = assign_roles(&train, &test, cfg.training.validation_fraction, cfg.seed);
    let grid = cfg.grid()?;
    let ds = build_dataset(&roles, &cfg.acquisition_plan(), &grid, &cfg.ccd_config(), &cfg.emitter_model())?;
    ds.save(out)?;
    write_text(out, DATASET_CONFIG, &cfg.to_toml())?;

    let m = &ds.manifest;
    let count = |r: Role| m.conditions_with_role(r).len();
    let per = m.n_ls * m.n_hs;
    let fit = (count(Role::Train) + count(Role::Validation)) * per;
    println!(
        "conditions: {} (train {}, validation {}, test {})",
        m.conditions.len(),
        count(Role::Train),
        count(Role::Validation),
        count(Role::Test)
    );
    println!("acquisitions per condition: {} short ({} s), {} long ({} s)", m.n_ls, m.tau_ls, m.n_hs, m.tau_hs);
    println!("pairs: {} total, {} training, {} test", m.pair_count(), fit, count(Role::Test) * per);
    println!("pixels: {} ({} - {} nm)", grid.n_pixels, grid.start_nm, grid.end_nm);
    println!("disk: {} bytes in {}", dir_size(out)?, out.display());
    println!("dataset hash: {}", ds.content_hash());
    Ok(())
}

pub fn calibrate(cfg: &Config, data: &Path, out: &Path) -> Result<(), CliError> {
    let ds = load_dataset(data)?;
    let _lock = OutputLock::acquire(out)?;
    let calib = Calibration::fit(&ds, cfg.pod.rank, &cfg.kriging_options(), cfg.kriging.average_hs)?;
    let hash = ds.content_hash();
    let prov = Provenance::new(hash.clone(), cfg.seed);
    calib.pod.to_archive(prov.clone()).save(&out.join(POD_ARCHIVE))?;
    calib.kriging.to_archive(prov).save(&out.join(KRIGING_ARCHIVE))?;

    let (rows, labels) = eval::calibration_rows(&ds, false)?;
    let (mut p, mut phi) = (Vec::new(), Vec::new());
    for s in &rows {
        let pred = calib.predict(s)?;
        p.push(vec![pred.mean[0]]);
        phi.push(vec![pred.mean[1]]);
    }
    let truth = |i: usize| labels.iter().map(|l| l[i]).collect::<Vec<_>>();
    let rec_p = eval::metrics(&p, &truth(0))?.rel_error;
    let rec_phi = eval::metrics(&phi, &truth(1))?.rel_error;

    let basis = calib.pod.basis();
    let mut energy = String::from("basis\tenergy_fraction\tcumulative\n");
    let mut cum = 0.0;
    for (j, e) in basis.energy_fraction().iter().enumerate() {
        cum += e;
        writeln!(energy, "{}\t{:.8}\t{:.8}", j + 1, e, cum).unwrap();
    }
    write_text(out, "energy.tsv", &energy)?;
    CalibrationDoc {
        grid: ds.manifest.grid,
        dataset_hash: hash,
        seed: cfg.seed,
        energy_fraction: basis.energy_fraction().to_vec(),
        cumulative_energy: basis.cumulative_energy(),
        rec_pressure: rec_p,
        rec_phi,
    }
    .save(out)?;

    println!("POD bases: {} from {} long-exposure spectra", calib.pod.k(), rows.len());
    print!("{energy}");
    println!("cumulative energy: {:.4} %", 100.0 * basis.cumulative_energy());
    println!("kriging self-check on calibration spectra: REC P {rec_p:.4} %, REC phi {rec_phi:.4} %");
    Ok(())
}

fn scheme_setup(cfg: &Config, scheme: Scheme) -> Result<(NetworkConfig, TrainConfig), CliError> {
    match scheme {
        Scheme::Du => Ok((cfg.network_config(), cfg.train_config())),
        Scheme::Plain => Ok((cfg.network_config().plain(), cfg.plain_train_config())),
        Scheme::Raw => Err(CliError::usage("the raw scheme has no network to train")),
    }
}

fn echo(scheme: Scheme, n: &NetworkConfig, t: &TrainConfig) {
    println!(
        "{}: N_l={}, N_c={}, N_k={}, N_d={}, W={}, alpha={}, epochs={}, batch={}, receptive field {}, {} conv parameters + {} batch-norm",
        scheme.name(),
        n.n_layers,
        n.n_channels,
        n.kernel_size,
        n.downsample,
        n.input_width,
        t.alpha,
        t.epochs,
        t.batch_size,
        dnn::receptive_field(n),
        dnn::param_count(n),
        dnn::bn_param_count(n)
    );
}

pub fn train(cfg: &Config, data: &Path, models: &Path, schemes: &[Scheme], out: &Path, dry_run: bool) -> Result<(), CliError> {
    let mut setups = Vec::new();
    for &s in schemes {
        let (n, t) = scheme_setup(cfg, s)?;
        n.validate()?;
        t.validate()?;
        echo(s, &n, &t);
        setups.push((s, n, t));
    }
    if dry_run {
        return Ok(());
    }
    let ds = load_dataset(data)?;
    let hash = ds.content_hash();
    let pod_archive = load_archive(models, POD_ARCHIVE, ArchiveKind::Pod)?;
    check_provenance(&pod_archive, POD_ARCHIVE, &hash)?;
    let pod = PodModel::from_archive(&pod_archive)?;
    let _lock = OutputLock::acquire(out)?;
    for (s, n, t) in setups {
        let outcome = eval::train_on_dataset(&ds, &n, &t, Some(&pod))?;
        let log = tables::training_log_table(&outcome.log);
        let best = &outcome.log[outcome.best_epoch];
        println!(
            "{}: best epoch {} (train loss {:.5}, validation loss {:.5})",
            s.name(),
            outcome.best_epoch,
            best.train_loss,
            best.val_loss
        );
        let ckpt = Checkpoint { training: t, outcome };
        ckpt.to_archive(Provenance::new(hash.clone(), cfg.seed))
            .save(&out.join(denoiser_archive(s.name())))?;
        write_text(out, &format!("{}_log.tsv", s.name()), &log)?;
    }
    Ok(())
}

fn load_net(models: &Path, scheme: Scheme, dataset_hash: &str) -> Result<DenoiserNet, CliError> {
    let name = denoiser_archive(scheme.name());
    let a = load_archive(models, &name, ArchiveKind::Denoiser)?;
    check_provenance(&a, &name, dataset_hash)?;
    Ok(Checkpoint::from_archive(&a)?.outcome.net)
}

fn load_calibration(models: &Path, dataset_hash: &str) -> Result<Calibration, CliError> {
    let pa = load_archive(models, POD_ARCHIVE, ArchiveKind::Pod)?;
    check_provenance(&pa, POD_ARCHIVE, dataset_hash)?;
    let ka = load_archive(models, KRIGING_ARCHIVE, ArchiveKind::Kriging)?;
    check_provenance(&ka, KRIGING_ARCHIVE, dataset_hash)?;
    Ok(Calibration { pod: PodModel::from_archive(&pa)?, kriging: KrigingModel::from_archive(&ka)? })
}

pub struct PredictArgs<'a> {
    pub models: &'a Path,
    pub input: &'a Path,
    pub scheme: Scheme,
    pub dark: Option<&'a Path>,
    pub variance: bool,
    pub out: Option<&'a Path>,
}

pub fn predict(a: &PredictArgs) -> Result<(), CliError> {
    let doc = CalibrationDoc::load(a.models)?;
    let calib = load_calibration(a.models, &doc.dataset_hash)?;
    let grid = doc.grid;
    let mut spectra = read_spectra(a.input)?;
    for (i, s) in spectra.iter().enumerate() {
        if s.len() != grid.n_pixels {
            return Err(CliError::usage(format!(
                "GridMismatch: spectrum {i} has {} values, the models expect {} pixels",
                s.len(),
                grid.n_pixels
            )));
        }
    }
    if let Some(dark_path) = a.dark {
        let dark = read_spectra(dark_path)?;
        let [dark] = dark.as_slice() else {
            return Err(CliError::usage(format!("{} must hold exactly one mean dark spectrum", dark_path.display())));
        };
        let dark = Spectrum::new(grid, dark.clone(), 1.0, Stage::RawCounts)?;
        spectra = spectra
            .into_iter()
            .map(|s| Ok(spectral::preprocess(&Spectrum::new(grid, s, 1.0, Stage::RawCounts)?, &dark)?.into_intensities()))
            .collect::<Result<_, CliError>>()?;
    }
    let inputs = match a.scheme {
        Scheme::Raw => spectra,
        s => eval::denoise_all(&load_net(a.models, s, &doc.dataset_hash)?, &spectra)?,
    };
    let mut table = String::from("index\tpressure_bar\tphi");
    if a.variance {
        table.push_str("\tpressure_var\tphi_var");
    }
    table.push('\n');
    for (i, s) in inputs.iter().enumerate() {
        let p = calib.predict(s)?;
        write!(table, "{i}\t{:.8}\t{:.8}", p.mean[0], p.mean[1]).unwrap();
        if a.variance {
            write!(table, "\t{:.6e}\t{:.6e}", p.variance[0], p.variance[1]).unwrap();
        }
        table.push('\n');
    }
    match a.out {
        Some(path) => fs::write(path, table)?,
        None => print!("{table}"),
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Rf,
    Exposure,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalSummary {
    pub dataset_hash: String,
    pub seed: u64,
    pub schemes: Vec<SchemeResult>,
}

pub fn eval(cfg: &Config, data: &Path, models: &Path, sweep: Option<Sweep>, out: &Path) -> Result<(), CliError> {
    let ds = load_dataset(data)?;
    let hash = ds.content_hash();
    let calib = load_calibration(models, &hash)?;
    let nets = |hash: &str| -> Result<(DenoiserNet, DenoiserNet), CliError> {
        Ok((load_net(models, Scheme::Plain, hash)?, load_net(models, Scheme::Du, hash)?))
    };
    match sweep {
        None => {
            let (plain, du) = nets(&hash)?;
            let _lock = OutputLock::acquire(out)?;
            let results = eval::compare_schemes(&ds, &calib, &plain, &du)?;
            let table = tables::scheme_table(&results);
            write_text(out, SCHEMES_TABLE, &table)?;
            write_text(out, CONDITIONS_TABLE, &tables::condition_table(&results))?;
            let summary = EvalSummary { dataset_hash: hash, seed: cfg.seed, schemes: results };
            let mut doc = serde_json::to_string_pretty(&summary).expect("serializable");
            doc.push('\n');
            write_text(out, SUMMARY_DOC, &doc)?;
            print!("{table}");
        }
        Some(Sweep::Rf) => {
            let _lock = OutputLock::acquire(out)?;
            let configs: Vec<NetworkConfig> = cfg.eval.rf_sweep.iter().map(|p| cfg.sweep_network(p)).collect();
            let rows = eval::rf_sweep(&ds, &calib, &configs, &cfg.train_config())?;
            let table = tables::rf_table(&rows);
            write_text(out, RF_TABLE, &table)?;
            print!("{table}");
        }
        Some(Sweep::Exposure) => {
            let setup = GeneratorSetup {
                grid: ds.manifest.grid,
                plan: cfg.acquisition_plan(),
                ccd: cfg.ccd_config(),
                model: cfg.emitter_model(),
                conditions: ds.manifest.conditions.clone(),
            };
            if generator_hash(&setup.grid, &setup.plan, &setup.ccd, &setup.model) != ds.manifest.generator_hash {
                return Err(CliError::usage(
                    "the configuration does not describe the generator of this dataset; pass the config used by gen",
                ));
            }
            let reuse = if cfg.eval.retrain { None } else { Some(nets(&hash)?) };
            let _lock = OutputLock::acquire(out)?;
            let (du_net, plain_net) = (cfg.network_config(), cfg.network_config().plain());
            let (du_train, plain_train) = (cfg.train_config(), cfg.plain_train_config());
            let sweep = ExposureSweep {
                taus: &cfg.eval.exposures,
                snr_repeats: SNR_REPEATS,
                du: (&du_net, &du_train),
                plain: (&plain_net, &plain_train),
                reuse: reuse.as_ref().map(|(p, d)| (p, d)),
            };
            let rows = eval::exposure_sweep(&setup, &calib, &sweep)?;
            let table = tables::exposure_table(&rows);
            write_text(out, EXPOSURE_TABLE, &table)?;
            print!("{table}");
        }
    }
    Ok(())
}

fn tsv_to_markdown(tsv: &str) -> String {
    let mut lines = tsv.lines().filter(|l| !l.trim().is_empty());
    let Some(header) = lines.next() else {
        return String::new();
    };
    let cols: Vec<&str> = header.split('\t').collect();
    let mut s = format!("| {} |\n|{}\n", cols.join(" | "), " --- |".repeat(cols.len()));
    for l in lines {
        writeln!(s, "| {} |", l.split('\t').collect::<Vec<_>>().join(" | ")).unwrap();
    }
    s
}

pub fn report(out: &Path) -> Result<(), CliError> {
    let mut doc = String::from("# Evaluation report\n");
    let mut found = false;
    let summary_path = out.join(SUMMARY_DOC);
    if summary_path.exists() {
        let text = fs::read_to_string(&summary_path)?;
        let s: EvalSummary =
            serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", summary_path.display())))?;
        writeln!(doc, "\nDataset `{}`, seed {}.\n", short(&s.dataset_hash), s.seed).unwrap();
        doc.push_str("## Scheme comparison (percent)\n\n");
        doc.push_str("| scheme | REC P | REC phi | REP P | REP phi | RSD P | RSD phi |\n");
        doc.push_str("| --- | --- | --- | --- | --- | --- | --- |\n");
        for r in &s.schemes {
            writeln!(
                doc,
                "| {} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} |",
                r.scheme.name(),
                r.rec_pressure,
                r.rec_phi,
                r.rep_pressure,
                r.rep_phi,
                r.rsd_pressure,
                r.rsd_phi
            )
            .unwrap();
        }
        let rep = |sc: Scheme| s.schemes.iter().find(|r| r.scheme == sc);
        if let (Some(raw), Some(du)) = (rep(Scheme::Raw), rep(Scheme::Du)) {
            writeln!(
                doc,
                "\nREP ratio raw / du: P {:.2}, phi {:.2}.",
                raw.rep_pressure / du.rep_pressure,
                raw.rep_phi / du.rep_phi
            )
            .unwrap();
        }
        found = true;
    }
    for (name, title) in [(RF_TABLE, "Receptive-field sweep"), (EXPOSURE_TABLE, "Exposure sweep")] {
        let path = out.join(name);
        if path.exists() {
            writeln!(doc, "\n## {title}\n\n{}", tsv_to_markdown(&fs::read_to_string(&path)?)).unwrap();
            found = true;
        }
    }
    if !found {
        return Err(CliError::Io(format!(
            "{} holds no evaluation results; run `fes eval` first",
            out.display()
        )));
    }
    let _lock = OutputLock::acquire(out)?;
    write_text(out, REPORT_DOC, &doc)?;
    print!("{doc}");
    Ok(())
}

fn calc_config(layers: usize, channels: usize, kernel: usize, downsample: usize) -> Result<NetworkConfig, CliError> {
    let cfg = NetworkConfig { n_layers: layers, n_channels: channels, kernel_size: kernel, downsample, input_width: 1 };
    cfg.validate()?;
    Ok(cfg)
}

pub fn calc_rf(layers: usize, kernel: usize, downsample: usize) -> Result<(), CliError> {
    println!("{}", dnn::receptive_field(&calc_config(layers, 1, kernel, downsample)?));
    Ok(())
}

pub fn calc_params(layers: usize, channels: usize, kernel: usize, downsample: usize, bn: bool) -> Result<(), CliError> {
    let cfg = calc_config(layers, channels, kernel, downsample)?;
    println!("{}", dnn::param_count(&cfg));
    if bn {
        println!("{}", dnn::bn_param_count(&cfg));
    }
    Ok(())
}
