use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::batchnorm::{self, BnCache};
use super::conv::{self, ConvShape};
use super::du;
use super::{DnnError, NetworkConfig};
use crate::io::{IoError, ModelArchive};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    ConvWeight,
    ConvBias,
    BnScale,
    BnShift,
}

/// A named slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamArray {
    pub name: String,
    pub kind: ParamKind,
    pub layer: usize,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    shape: ConvShape,
    weight: Range<usize>,
    bias: Range<usize>,
    /// Scale and shift ranges plus the index into the running statistics.
    bn: Option<(Range<usize>, Range<usize>, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserNet {
    cfg: NetworkConfig,
    layers: Vec<Layer>,
    params: Vec<f64>,
    running_mean: Vec<Vec<f64>>,
    running_var: Vec<Vec<f64>>,
}

/// Activations recorded by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    /// Input of every convolution, `batch x c_in x L`.
    inputs: Vec<Vec<f64>>,
    bn: Vec<Option<BnCache>>,
}

impl DenoiserNet {
    fn skeleton(cfg: NetworkConfig) -> Result<Self, DnnError> {
        cfg.validate()?;
        let (nl, nc, k, nd) = (cfg.n_layers, cfg.n_channels, cfg.kernel_size, cfg.downsample);
        let mut layers = Vec::with_capacity(nl);
        let mut off = 0;
        let mut take = |n: usize| {
            let r = off..off + n;
            off += n;
            r
        };
        let mut n_bn = 0;
        for l in 0..nl {
            let c_in = if l == 0 { nd } else { nc };
            let c_out = if l == nl - 1 { nd } else { nc };
            let shape = ConvShape { c_in, c_out, k };
            let weight = take(shape.weight_len());
            let bias = take(c_out);
            let bn = if l > 0 && l < nl - 1 {
                n_bn += 1;
                Some((take(c_out), take(c_out), n_bn - 1))
            } else {
                None
            };
            layers.push(Layer { shape, weight, bias, bn });
        }
        let mut params = vec![0.0; off];
        for layer in &layers {
            if let Some((g, _, _)) = &layer.bn {
                params[g.clone()].fill(1.0);
            }
        }
        Ok(Self {
            cfg,
            layers,
            params,
            running_mean: vec![vec![0.0; nc]; n_bn],
            running_var: vec![vec![1.0; nc]; n_bn],
        })
    }

    /// He-initialized weights (`N(0, 2 / fan_in)`), zero biases, unit BN scale.
    pub fn new(cfg: NetworkConfig, seed: u64) -> Result<Self, DnnError> {
        let mut net = Self::skeleton(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &net.layers {
            let fan_in = (layer.shape.c_in * layer.shape.k) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            for v in &mut net.params[layer.weight.clone()] {
                *v = normal.sample(&mut rng);
            }
        }
        Ok(net)
    }

    /// Strictly positive weights and biases, used to probe connectivity:
    /// with non-negative inputs no ReLU ever clips, so every path through
    /// the receptive field carries signal.
    pub fn with_positive_weights(cfg: NetworkConfig, seed: u64) -> Result<Self, DnnError> {
        let mut net = Self::skeleton(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &net.layers {
            let fan_in = (layer.shape.c_in * layer.shape.k) as f64;
            for v in &mut net.params[layer.weight.clone()] {
                *v = rng.random_range(0.5..1.0) / fan_in;
            }
            for v in &mut net.params[layer.bias.clone()] {
                *v = rng.random_range(0.01..0.1);
            }
        }
        Ok(net)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn running_stats(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.running_mean, &self.running_var)
    }

    pub fn named_arrays(&self) -> Vec<ParamArray> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut push = |suffix: &str, kind, range: &Range<usize>| {
                out.push(ParamArray { name: format!("layer{i}.{suffix}"), kind, layer: i, range: range.clone() })
            };
            push("weight", ParamKind::ConvWeight, &layer.weight);
            push("bias", ParamKind::ConvBias, &layer.bias);
            if let Some((g, b, _)) = &layer.bn {
                push("bn_scale", ParamKind::BnScale, g);
                push("bn_shift", ParamKind::BnShift, b);
            }
        }
        out
    }

    fn check_input(&self, x: &[f64], batch: usize) -> Result<(), DnnError> {
        if batch == 0 || x.len() != batch * self.cfg.input_width {
            return Err(DnnError::ShapeMismatch(format!(
                "expected {batch} spectra of width {}, got {} values",
                self.cfg.input_width,
                x.len()
            )));
        }
        Ok(())
    }

    fn down(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let w = self.cfg.input_width;
        let mut h = Vec::with_capacity(batch * self.cfg.padded_width());
        for s in 0..batch {
            h.extend(du::downsample(&x[s * w..(s + 1) * w], self.cfg.downsample));
        }
        h
    }

    fn run(&self, x: &[f64], batch: usize, train: bool) -> Result<(Vec<f64>, Option<ForwardCache>), DnnError> {
        self.check_input(x, batch)?;
        let l = self.cfg.sub_len();
        let nl = self.layers.len();
        let mut h = self.down(x, batch);
        let mut inputs = Vec::with_capacity(nl);
        let mut bn_caches = Vec::with_capacity(nl);
        for (li, layer) in self.layers.iter().enumerate() {
            let s = layer.shape;
            let w = &self.params[layer.weight.clone()];
            let b = &self.params[layer.bias.clone()];
            let mut z = vec![0.0; batch * s.c_out * l];
            for n in 0..batch {
                conv::forward(
                    s,
                    &h[n * s.c_in * l..(n + 1) * s.c_in * l],
                    w,
                    b,
                    l,
                    &mut z[n * s.c_out * l..(n + 1) * s.c_out * l],
                );
            }
            let mut bn_cache = None;
            if let Some((g, be, idx)) = &layer.bn {
                let (gamma, beta) = (&self.params[g.clone()], &self.params[be.clone()]);
                let mut y = vec![0.0; z.len()];
                if train {
                    bn_cache = Some(batchnorm::forward_train(&z, s.c_out, l, gamma, beta, &mut y));
                } else {
                    batchnorm::forward_infer(&z, s.c_out, l, gamma, beta, &self.running_mean[*idx], &self.running_var[*idx], &mut y);
                }
                z = y;
            }
            if li + 1 < nl {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            if train {
                inputs.push(std::mem::replace(&mut h, z));
                bn_caches.push(bn_cache);
            } else {
                h = z;
            }
        }
        let w = self.cfg.input_width;
        let per = self.cfg.padded_width();
        let mut out = Vec::with_capacity(batch * w);
        for n in 0..batch {
            out.extend(du::upsample(&h[n * per..(n + 1) * per], self.cfg.downsample, w)?);
        }
        let cache = train.then_some(ForwardCache { batch, inputs, bn: bn_caches });
        Ok((out, cache))
    }

    /// Training-mode forward pass: batch statistics in every BN layer.
    /// `x` holds `batch` spectra back to back.
    pub fn forward_train(&self, x: &[f64], batch: usize) -> Result<(Vec<f64>, ForwardCache), DnnError> {
        let (out, cache) = self.run(x, batch, true)?;
        Ok((out, cache.expect("training pass records a cache")))
    }

    /// Inference-mode forward pass with frozen running statistics.
    pub fn infer(&self, x: &[f64], batch: usize) -> Result<Vec<f64>, DnnError> {
        Ok(self.run(x, batch, false)?.0)
    }

    /// Gradient of `sum(d_out * output)` with respect to every parameter,
    /// laid out like [`DenoiserNet::params`].
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64]) -> Result<Vec<f64>, DnnError> {
        let batch = cache.batch;
        if d_out.len() != batch * self.cfg.input_width {
            return Err(DnnError::ShapeMismatch("output gradient does not match the cached batch".into()));
        }
        let l = self.cfg.sub_len();
        let nl = self.layers.len();
        let mut grads = vec![0.0; self.params.len()];
        // downsampling is the adjoint of upsample-and-crop
        let mut dh = self.down(d_out, batch);
        for li in (0..nl).rev() {
            let layer = &self.layers[li];
            let s = layer.shape;
            if li + 1 < nl {
                let act = &cache.inputs[li + 1];
                for (d, a) in dh.iter_mut().zip(act) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            if let Some((g, be, _)) = &layer.bn {
                let bn = cache.bn[li].as_ref().expect("bn cache recorded");
                let gamma = self.params[g.clone()].to_vec();
                let (mut dg, mut db) = (vec![0.0; s.c_out], vec![0.0; s.c_out]);
                dh = batchnorm::backward(bn, s.c_out, l, &gamma, &dh, &mut dg, &mut db);
                grads[g.clone()].iter_mut().zip(&dg).for_each(|(a, b)| *a += b);
                grads[be.clone()].iter_mut().zip(&db).for_each(|(a, b)| *a += b);
            }
            let x = &cache.inputs[li];
            let w = &self.params[layer.weight.clone()];
            let mut dw = vec![0.0; s.weight_len()];
            let mut db = vec![0.0; s.c_out];
            let mut dx = if li > 0 { vec![0.0; batch * s.c_in * l] } else { Vec::new() };
            for n in 0..batch {
                let dxn = if li > 0 { Some(&mut dx[n * s.c_in * l..(n + 1) * s.c_in * l]) } else { None };
                conv::backward(
                    s,
                    &x[n * s.c_in * l..(n + 1) * s.c_in * l],
                    w,
                    &dh[n * s.c_out * l..(n + 1) * s.c_out * l],
                    l,
                    &mut dw,
                    &mut db,
                    dxn,
                );
            }
            grads[layer.weight.clone()].copy_from_slice(&dw);
            grads[layer.bias.clone()].copy_from_slice(&db);
            dh = dx;
        }
        Ok(grads)
    }

    /// Folds the batch statistics of a training pass into the running
    /// statistics used at inference.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        for (li, layer) in self.layers.iter().enumerate() {
            if let (Some((_, _, idx)), Some(bn)) = (&layer.bn, &cache.bn[li]) {
                batchnorm::update_running(bn, &mut self.running_mean[*idx], &mut self.running_var[*idx]);
            }
        }
    }

    /// Appends parameters and running statistics to an archive.
    pub fn write_arrays(&self, a: &mut ModelArchive) {
        for p in self.named_arrays() {
            let layer = &self.layers[p.layer];
            let shape = match p.kind {
                ParamKind::ConvWeight => vec![layer.shape.c_out, layer.shape.c_in, layer.shape.k],
                _ => vec![p.range.len()],
            };
            a.push_f64(&p.name, &shape, self.params[p.range.clone()].to_vec());
        }
        for (i, (m, v)) in self.running_mean.iter().zip(&self.running_var).enumerate() {
            a.push_f64(&format!("bn{i}.running_mean"), &[m.len()], m.clone());
            a.push_f64(&format!("bn{i}.running_var"), &[v.len()], v.clone());
        }
    }

    pub fn read_arrays(cfg: NetworkConfig, a: &ModelArchive) -> Result<Self, IoError> {
        let mut net = Self::skeleton(cfg).map_err(|e| IoError::Format(e.to_string()))?;
        for p in net.named_arrays() {
            let values = a.f64_array(&p.name, p.range.len())?;
            net.params[p.range.clone()].copy_from_slice(values);
        }
        let nc = cfg.n_channels;
        for i in 0..net.running_mean.len() {
            net.running_mean[i] = a.f64_array(&format!("bn{i}.running_mean"), nc)?.to_vec();
            net.running_var[i] = a.f64_array(&format!("bn{i}.running_var"), nc)?.to_vec();
        }
        if net.params.iter().any(|v| !v.is_finite()) {
            return Err(IoError::Format("denoiser parameters are not finite".into()));
        }
        Ok(net)
    }
}

/// Counts output pixels that react to a unit bump at the central input
/// pixel of an all-ones spectrum (inference mode).
pub fn empirical_receptive_field(net: &DenoiserNet) -> Result<usize, DnnError> {
    let w = net.config().input_width;
    let base = vec![1.0; w];
    let mut bumped = base.clone();
    bumped[w / 2] += 1.0;
    let y0 = net.infer(&base, 1)?;
    let y1 = net.infer(&bumped, 1)?;
    Ok(y0.iter().zip(&y1).filter(|(a, b)| (*a - *b).abs() > 1e-12).count())
}
