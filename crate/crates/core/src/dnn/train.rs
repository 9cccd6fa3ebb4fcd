//! Mini-batch training loop with intensity augmentation, a held-out
//! validation split (whole conditions) and best-validation checkpointing.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::loss::composite_loss;
use super::net::DenoiserNet;
use super::schedule::ScheduleConfig;
use super::{DnnError, NetworkConfig};
use crate::io::{ArchiveKind, Dataset, IoError, ModelArchive, Provenance, Role, SpectrumKind};
use crate::pod::PodModel;
use crate::spectral::AUGMENT_RANGE;
use crate::synthgen::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub schedule: ScheduleConfig,
    /// Weight of the POD-coefficient term.
    pub alpha: f64,
    /// Share of training conditions held out for validation.
    pub validation_fraction: f64,
    pub augment_min: f64,
    pub augment_max: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            adam: AdamConfig::default(),
            schedule: ScheduleConfig::default(),
            alpha: 0.1,
            validation_fraction: 0.1,
            augment_min: AUGMENT_RANGE.0,
            augment_max: AUGMENT_RANGE.1,
            seed: 2023,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DnnError> {
        let bad = |m: String| Err(DnnError::ConfigInvalid(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!("validation_fraction {} outside (0, 1)", self.validation_fraction));
        }
        let (lo, hi) = AUGMENT_RANGE;
        if !(lo <= self.augment_min && self.augment_min <= self.augment_max && self.augment_max <= hi) {
            return bad(format!("augmentation range must lie within [{lo}, {hi}]"));
        }
        if !(self.adam.beta1 > 0.0 && self.adam.beta1 < 1.0 && self.adam.beta2 > 0.0 && self.adam.beta2 < 1.0 && self.adam.eps > 0.0) {
            return bad("adam betas must lie in (0, 1) and eps must be positive".into());
        }
        self.schedule.validate()
    }
}

/// Normalized short- and long-exposure spectra of one condition. Training
/// pairs are the full cross product `low x high`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSpectra {
    pub low: Vec<Vec<f64>>,
    pub high: Vec<Vec<f64>>,
}

impl ConditionSpectra {
    /// One entry per condition whose role passes `role`, in manifest order.
    pub fn from_dataset(ds: &Dataset, role: impl Fn(Role) -> bool) -> Result<Vec<Self>, IoError> {
        let mut out = Vec::new();
        for (ci, entry) in ds.manifest.conditions.iter().enumerate() {
            if !role(entry.role) {
                continue;
            }
            let mut c = ConditionSpectra { low: Vec::new(), high: Vec::new() };
            for (ri, r) in ds.manifest.records.iter().enumerate() {
                if r.condition_index != Some(ci) {
                    continue;
                }
                let v = ds.normalized(ri)?.into_intensities();
                match r.kind {
                    SpectrumKind::LowSnr => c.low.push(v),
                    SpectrumKind::HighSnr => c.high.push(v),
                    SpectrumKind::Dark => {}
                }
            }
            out.push(c);
        }
        Ok(out)
    }

    fn pairs(set: &[Self]) -> Vec<(usize, usize, usize)> {
        let mut p = Vec::new();
        for (c, s) in set.iter().enumerate() {
            for i in 0..s.low.len() {
                for j in 0..s.high.len() {
                    p.push((c, i, j));
                }
            }
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Optimizer steps taken by the end of the epoch.
    pub step: u64,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights at the epoch with the lowest validation loss.
    pub net: DenoiserNet,
    pub best_epoch: usize,
    pub adam: AdamState,
    pub log: Vec<EpochLog>,
}

fn eval_loss(
    net: &DenoiserNet,
    set: &[ConditionSpectra],
    pairs: &[(usize, usize, usize)],
    batch_size: usize,
    pod: Option<&PodModel>,
    alpha: f64,
) -> Result<f64, DnnError> {
    let w = net.config().input_width;
    let mut total = 0.0;
    for chunk in pairs.chunks(batch_size) {
        let x: Vec<f64> = chunk.iter().flat_map(|&(c, i, _)| set[c].low[i].iter().copied()).collect();
        let y: Vec<f64> = chunk.iter().flat_map(|&(c, _, j)| set[c].high[j].iter().copied()).collect();
        let pred = net.infer(&x, chunk.len())?;
        total += composite_loss(&pred, &y, w, pod, alpha)?.0 * chunk.len() as f64;
    }
    Ok(total / pairs.len() as f64)
}

/// Trains a fresh network on `train` and selects the epoch with the lowest
/// loss on `val` (inference mode, no augmentation).
pub fn train(
    train: &[ConditionSpectra],
    val: &[ConditionSpectra],
    net_cfg: &NetworkConfig,
    cfg: &TrainConfig,
    pod: Option<&PodModel>,
) -> Result<TrainOutcome, DnnError> {
    cfg.validate()?;
    net_cfg.validate()?;
    let w = net_cfg.input_width;
    let pairs = ConditionSpectra::pairs(train);
    let val_pairs = ConditionSpectra::pairs(val);
    if pairs.is_empty() || val_pairs.is_empty() {
        return Err(DnnError::EmptyDataset);
    }
    for s in train.iter().chain(val) {
        if s.low.iter().chain(&s.high).any(|v| v.len() != w) {
            return Err(DnnError::ShapeMismatch(format!("training spectra must have width {w}")));
        }
    }
    if cfg.alpha > 0.0 && pod.is_none() {
        return Err(DnnError::ConfigInvalid("alpha > 0 needs a POD model".into()));
    }

    let mut net = DenoiserNet::new(*net_cfg, cfg.seed)?;
    let mut adam = AdamState::new(net.n_params());
    let mut rng = stream_rng(cfg.seed, 0x5452_4149_4e00);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, DenoiserNet)> = None;

    for epoch in 0..cfg.epochs {
        let lr = cfg.schedule.lr(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut x = Vec::with_capacity(chunk.len() * w);
            let mut y = Vec::with_capacity(chunk.len() * w);
            for &p in chunk {
                let (c, i, j) = pairs[p];
                let f = if cfg.augment_max > cfg.augment_min {
                    rng.random_range(cfg.augment_min..=cfg.augment_max)
                } else {
                    cfg.augment_min
                };
                x.extend(train[c].low[i].iter().map(|v| v * f));
                y.extend(train[c].high[j].iter().map(|v| v * f));
            }
            let (pred, cache) = net.forward_train(&x, chunk.len())?;
            let (loss, d_pred) = composite_loss(&pred, &y, w, pod, cfg.alpha)?;
            let grads = net.backward(&cache, &d_pred)?;
            adam.step(&cfg.adam, net.params_mut(), &grads, lr)?;
            net.update_running_stats(&cache);
            total += loss * chunk.len() as f64;
        }
        let train_loss = total / pairs.len() as f64;
        let val_loss = eval_loss(&net, val, &val_pairs, cfg.batch_size, pod, cfg.alpha)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(DnnError::Diverged(epoch));
        }
        log.push(EpochLog { epoch, step: adam.step, lr, train_loss, val_loss });
        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, net.clone()));
        }
    }
    let (_, best_epoch, net) = best.expect("at least one epoch");
    Ok(TrainOutcome { net, best_epoch, adam, log })
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    network: NetworkConfig,
    training: TrainConfig,
    best_epoch: usize,
    adam_step: u64,
}

/// A trained denoiser with everything needed to audit or resume it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub training: TrainConfig,
    pub outcome: TrainOutcome,
}

impl Checkpoint {
    pub fn to_archive(&self, provenance: Provenance) -> ModelArchive {
        let o = &self.outcome;
        let doc = CheckpointDoc {
            network: *o.net.config(),
            training: self.training.clone(),
            best_epoch: o.best_epoch,
            adam_step: o.adam.step,
        };
        let mut a = ModelArchive::new(ArchiveKind::Denoiser, serde_json::to_string(&doc).unwrap(), provenance);
        o.net.write_arrays(&mut a);
        a.push_f64("adam.m", &[o.adam.m.len()], o.adam.m.clone());
        a.push_f64("adam.v", &[o.adam.v.len()], o.adam.v.clone());
        let n = o.log.len();
        a.push_f64("log.epoch", &[n], o.log.iter().map(|r| r.epoch as f64).collect());
        a.push_f64("log.step", &[n], o.log.iter().map(|r| r.step as f64).collect());
        a.push_f64("log.lr", &[n], o.log.iter().map(|r| r.lr).collect());
        a.push_f64("log.train_loss", &[n], o.log.iter().map(|r| r.train_loss).collect());
        a.push_f64("log.val_loss", &[n], o.log.iter().map(|r| r.val_loss).collect());
        a
    }

    pub fn from_archive(a: &ModelArchive) -> Result<Self, IoError> {
        a.expect_kind(ArchiveKind::Denoiser)?;
        let doc: CheckpointDoc =
            serde_json::from_str(&a.config).map_err(|e| IoError::Format(format!("denoiser config: {e}")))?;
        let net = DenoiserNet::read_arrays(doc.network, a)?;
        let np = net.n_params();
        let adam = AdamState {
            m: a.f64_array("adam.m", np)?.to_vec(),
            v: a.f64_array("adam.v", np)?.to_vec(),
            step: doc.adam_step,
        };
        let n = a.array("log.epoch")?.shape.first().copied().unwrap_or(0);
        let col = |name: &str| a.f64_array(name, n);
        let (ep, st, lr, tl, vl) = (col("log.epoch")?, col("log.step")?, col("log.lr")?, col("log.train_loss")?, col("log.val_loss")?);
        let log = (0..n)
            .map(|i| EpochLog { epoch: ep[i] as usize, step: st[i] as u64, lr: lr[i], train_loss: tl[i], val_loss: vl[i] })
            .collect();
        Ok(Self {
            training: doc.training,
            outcome: TrainOutcome { net, best_epoch: doc.best_epoch, adam, log },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn toy(n_cond: usize, seed: u64) -> Vec<ConditionSpectra> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n_cond)
            .map(|c| {
                let clean: Vec<f64> = (0..16).map(|p| 1.0 + 0.5 * ((p as f64 + c as f64) * 0.4).sin()).collect();
                let noisy = |rng: &mut rand_chacha::ChaCha8Rng, s: f64| -> Vec<f64> {
                    clean.iter().map(|v| v + rng.random_range(-s..s)).collect()
                };
                ConditionSpectra {
                    low: (0..5).map(|_| noisy(&mut rng, 0.3)).collect(),
                    high: (0..2).map(|_| noisy(&mut rng, 0.01)).collect(),
                }
            })
            .collect()
    }

    fn cfgs() -> (NetworkConfig, TrainConfig) {
        let net = NetworkConfig { n_layers: 3, n_channels: 4, kernel_size: 3, downsample: 2, input_width: 16 };
        let tr = TrainConfig {
            epochs: 30,
            batch_size: 8,
            alpha: 0.0,
            schedule: ScheduleConfig { t0: 30, t_up: 3, eta_max: 0.01, ..Default::default() },
            seed: 9,
            ..Default::default()
        };
        (net, tr)
    }

    #[test]
    fn loss_drops_and_runs_are_reproducible() {
        let (net, tr) = cfgs();
        let data = toy(5, 1);
        let val = toy(1, 2);
        let a = train(&data, &val, &net, &tr, None).unwrap();
        assert_eq!(a.log.len(), 30);
        assert!(a.log.windows(2).all(|w| w[1].step > w[0].step));
        let first = a.log[0].train_loss;
        let last = a.log.last().unwrap().train_loss;
        assert!(last < 0.5 * first, "{first} -> {last}");
        let b = train(&data, &val, &net, &tr, None).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.net, b.net);
    }

    #[test]
    fn checkpoint_round_trip() {
        let (net, tr) = cfgs();
        let tr = TrainConfig { epochs: 3, ..tr };
        let o = train(&toy(2, 3), &toy(1, 4), &net, &tr, None).unwrap();
        let ck = Checkpoint { training: tr, outcome: o };
        let bytes = ck.to_archive(Provenance::new("h", 9)).to_bytes();
        let back = Checkpoint::from_archive(&ModelArchive::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back.outcome.net, ck.outcome.net);
        assert_eq!(back.outcome.log, ck.outcome.log);
        assert_eq!(back.to_archive(Provenance::new("h", 9)).to_bytes(), bytes);
    }

    #[test]
    fn rejects_empty_and_bad_config() {
        let (net, tr) = cfgs();
        assert_eq!(train(&[], &toy(1, 1), &net, &tr, None).unwrap_err(), DnnError::EmptyDataset);
        let bad = TrainConfig { alpha: 1.5, ..tr.clone() };
        assert!(matches!(train(&toy(1, 1), &toy(1, 2), &net, &bad, None), Err(DnnError::ConfigInvalid(_))));
        let needs_pod = TrainConfig { alpha: 0.1, ..tr };
        assert!(train(&toy(1, 1), &toy(1, 2), &net, &needs_pod, None).is_err());
    }
}
