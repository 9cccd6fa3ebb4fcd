//! Ordinary kriging from normalized POD coefficients to gas properties.
//!
//! Each output gets its own constant trend, process variance and anisotropic
//! Gaussian correlation `R_ij = exp(-sum_d theta_d (s_id - s_jd)^2)`. The
//! correlation ranges maximize the concentrated log-likelihood, found by an
//! isotropic log-grid scan followed by coordinate-wise grid scans with
//! golden-section refinement in log space.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{ArchiveKind, IoError, ModelArchive, Provenance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KrigingError {
    #[error("need at least two training sites, got {0}")]
    TooFewSites(usize),
    #[error("inconsistent training data: {0}")]
    Shape(String),
    #[error("correlation matrix is not positive definite (duplicate sites without a nugget?)")]
    SingularCorrelation,
    #[error("non-finite input")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrigingOptions {
    pub theta_min: f64,
    pub theta_max: f64,
    /// Points of the log-spaced theta grid per dimension.
    pub grid_points: usize,
    /// Coordinate-descent sweeps after the isotropic scan.
    pub refine_sweeps: usize,
    /// Nugget variance as a fraction of the target variance.
    pub nugget: f64,
}

impl Default for KrigingOptions {
    fn default() -> Self {
        Self {
            theta_min: 1e-3,
            theta_max: 1e3,
            grid_points: 20,
            refine_sweeps: 2,
            nugget: 1e-10,
        }
    }
}

/// Fitted model for one output.
#[derive(Debug, Clone, PartialEq)]
struct OutputModel {
    theta: Vec<f64>,
    trend: f64,
    process_variance: f64,
    /// Nugget over process variance, added to the correlation diagonal.
    lambda: f64,
    /// Lower Cholesky factor of `R + lambda I`, row-major `n x n`, where
    /// `lambda` is the nugget over the process variance.
    chol: Vec<f64>,
    /// `(R + lambda I)^-1 (y - trend)`.
    weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingModel {
    n: usize,
    dim: usize,
    n_out: usize,
    sites: Vec<f64>,
    targets: Vec<f64>,
    nugget: f64,
    outputs: Vec<OutputModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

fn correlation(a: &[f64], b: &[f64], theta: &[f64]) -> f64 {
    let d: f64 = a
        .iter()
        .zip(b)
        .zip(theta)
        .map(|((x, y), t)| t * (x - y) * (x - y))
        .sum();
    (-d).exp()
}

/// In-place lower Cholesky factor; `None` when not positive definite.
fn cholesky(mut a: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    Some(a)
}

fn forward_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

fn backward_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

fn chol_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    forward_solve(l, n, &mut x);
    backward_solve(l, n, &mut x);
    x
}

struct Fit {
    log_likelihood: f64,
    model: OutputModel,
}

fn fit_output(sites: &[f64], n: usize, dim: usize, y: &[f64], theta: &[f64], tau2: f64) -> Option<Fit> {
    let mut base = vec![0.0; n * n];
    for i in 0..n {
        base[i * n + i] = 1.0;
        for j in 0..i {
            let c = correlation(&sites[i * dim..(i + 1) * dim], &sites[j * dim..(j + 1) * dim], theta);
            base[i * n + j] = c;
            base[j * n + i] = c;
        }
    }
    // covariance sigma2 R + tau2 I, i.e. sigma2 (R + lambda I) with lambda = tau2 / sigma2
    let v = sample_variance(y);
    let mut lambda = if v > 0.0 { tau2 / v } else { tau2 };
    let mut fit = None;
    for _ in 0..MAX_NUGGET_ITERS {
        let mut r = base.clone();
        for i in 0..n {
            r[i * n + i] += lambda;
        }
        let l = cholesky(r, n)?;
        let ones = vec![1.0; n];
        let r_inv_1 = chol_solve(&l, n, &ones);
        let r_inv_y = chol_solve(&l, n, y);
        let denom: f64 = r_inv_1.iter().sum();
        let trend = r_inv_y.iter().sum::<f64>() / denom;
        let resid: Vec<f64> = y.iter().map(|v| v - trend).collect();
        let weights = chol_solve(&l, n, &resid);
        let sigma2 = (resid.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>() / n as f64).max(0.0);
        let log_det: f64 = (0..n).map(|i| l[i * n + i].ln()).sum::<f64>() * 2.0;
        let log_likelihood = -0.5 * (n as f64) * sigma2.max(f64::MIN_POSITIVE).ln() - 0.5 * log_det;
        if !log_likelihood.is_finite() {
            return None;
        }
        fit = Some(Fit {
            log_likelihood,
            model: OutputModel {
                theta: theta.to_vec(),
                trend,
                process_variance: sigma2,
                lambda,
                chol: l,
                weights,
            },
        });
        if tau2 == 0.0 || sigma2 <= 0.0 {
            break;
        }
        let next = tau2 / sigma2;
        if (next / lambda).ln().abs() < 1e-3 {
            break;
        }
        lambda = next;
    }
    fit
}

const MAX_NUGGET_ITERS: usize = 30;

fn sample_variance(y: &[f64]) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / y.len() as f64
}

fn search_theta(sites: &[f64], n: usize, dim: usize, y: &[f64], opts: &KrigingOptions) -> Result<OutputModel, KrigingError> {
    let (lo, hi) = (opts.theta_min.log10(), opts.theta_max.log10());
    let g = opts.grid_points.max(2);
    let grid: Vec<f64> = (0..g).map(|i| lo + (hi - lo) * i as f64 / (g - 1) as f64).collect();
    let step = (hi - lo) / (g - 1) as f64;
    let eval = |log_theta: &[f64]| {
        let theta: Vec<f64> = log_theta.iter().map(|t| 10f64.powf(*t)).collect();
        fit_output(sites, n, dim, y, &theta, opts.nugget * sample_variance(y))
    };

    let mut best: Option<(Vec<f64>, Fit)> = None;
    let consider = |lt: Vec<f64>, best: &mut Option<(Vec<f64>, Fit)>| {
        if let Some(f) = eval(&lt) {
            if best.as_ref().is_none_or(|(_, b)| f.log_likelihood > b.log_likelihood) {
                *best = Some((lt, f));
            }
        }
    };
    for &t in &grid {
        consider(vec![t; dim], &mut best);
    }
    if best.is_none() {
        return Err(KrigingError::SingularCorrelation);
    }

    for _ in 0..opts.refine_sweeps {
        for d in 0..dim {
            let start = best.as_ref().unwrap().0.clone();
            for &t in &grid {
                let mut lt = start.clone();
                lt[d] = t;
                consider(lt, &mut best);
            }
            // golden section on [t* - step, t* + step]
            let centre = best.as_ref().unwrap().0.clone();
            let ll_at = |t: f64| {
                let mut lt = centre.clone();
                lt[d] = t;
                eval(&lt).map_or(f64::NEG_INFINITY, |f| f.log_likelihood)
            };
            let (mut a, mut b) = ((centre[d] - step).max(lo), (centre[d] + step).min(hi));
            let phi = 0.5 * (5f64.sqrt() - 1.0);
            let mut x1 = b - phi * (b - a);
            let mut x2 = a + phi * (b - a);
            let (mut f1, mut f2) = (ll_at(x1), ll_at(x2));
            for _ in 0..16 {
                if f1 >= f2 {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - phi * (b - a);
                    f1 = ll_at(x1);
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + phi * (b - a);
                    f2 = ll_at(x2);
                }
            }
            let mut lt = centre.clone();
            lt[d] = if f1 >= f2 { x1 } else { x2 };
            consider(lt, &mut best);
        }
    }
    Ok(best.unwrap().1.model)
}

impl KrigingModel {
    /// Fits one ordinary-kriging model per target column.
    ///
    /// `sites` and `targets` hold one row per training sample.
    pub fn fit<S: AsRef<[f64]>, T: AsRef<[f64]>>(
        sites: &[S],
        targets: &[T],
        opts: &KrigingOptions,
    ) -> Result<Self, KrigingError> {
        let n = sites.len();
        if n < 2 {
            return Err(KrigingError::TooFewSites(n));
        }
        if targets.len() != n {
            return Err(KrigingError::Shape(format!("{n} sites but {} target rows", targets.len())));
        }
        let dim = sites[0].as_ref().len();
        let n_out = targets[0].as_ref().len();
        if dim == 0 || n_out == 0 {
            return Err(KrigingError::Shape("empty site or target rows".into()));
        }
        if sites.iter().any(|s| s.as_ref().len() != dim) || targets.iter().any(|t| t.as_ref().len() != n_out) {
            return Err(KrigingError::Shape("ragged rows".into()));
        }
        let flat_s: Vec<f64> = sites.iter().flat_map(|s| s.as_ref().iter().copied()).collect();
        let flat_t: Vec<f64> = targets.iter().flat_map(|t| t.as_ref().iter().copied()).collect();
        if flat_s.iter().chain(&flat_t).any(|v| !v.is_finite()) {
            return Err(KrigingError::NonFinite);
        }
        if !(opts.nugget > 0.0) {
            for i in 0..n {
                for j in 0..i {
                    if flat_s[i * dim..(i + 1) * dim] == flat_s[j * dim..(j + 1) * dim] {
                        return Err(KrigingError::SingularCorrelation);
                    }
                }
            }
        }

        let mut outputs = Vec::with_capacity(n_out);
        for o in 0..n_out {
            let y: Vec<f64> = (0..n).map(|i| flat_t[i * n_out + o]).collect();
            let first = y[0];
            let model = if y.iter().all(|&v| v == first) {
                // pure trend: correlation only used for the variance
                let theta = vec![1.0; dim];
                let mut m = fit_output(&flat_s, n, dim, &y, &theta, opts.nugget)
                    .ok_or(KrigingError::SingularCorrelation)?
                    .model;
                m.trend = first;
                m.process_variance = 0.0;
                m.weights = vec![0.0; n];
                m
            } else {
                search_theta(&flat_s, n, dim, &y, opts)?
            };
            outputs.push(model);
        }
        Ok(Self {
            n,
            dim,
            n_out,
            sites: flat_s,
            targets: flat_t,
            nugget: opts.nugget,
            outputs,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_outputs(&self) -> usize {
        self.n_out
    }

    pub fn theta(&self, output: usize) -> &[f64] {
        &self.outputs[output].theta
    }

    pub fn trend(&self, output: usize) -> f64 {
        self.outputs[output].trend
    }

    pub fn process_variance(&self, output: usize) -> f64 {
        self.outputs[output].process_variance
    }

    /// Diagonal term `lambda` of the factorized system `R + lambda I`.
    pub fn nugget_ratio(&self, output: usize) -> f64 {
        self.outputs[output].lambda
    }

    pub fn site(&self, i: usize) -> &[f64] {
        &self.sites[i * self.dim..(i + 1) * self.dim]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.n_out..(i + 1) * self.n_out]
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction, KrigingError> {
        if x.len() != self.dim {
            return Err(KrigingError::Shape(format!("query has {} coordinates, model expects {}", x.len(), self.dim)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(KrigingError::NonFinite);
        }
        let mut mean = Vec::with_capacity(self.n_out);
        let mut variance = Vec::with_capacity(self.n_out);
        for m in &self.outputs {
            let r: Vec<f64> = (0..self.n).map(|i| correlation(x, self.site(i), &m.theta)).collect();
            mean.push(m.trend + r.iter().zip(&m.weights).map(|(a, b)| a * b).sum::<f64>());
            let mut z = r;
            forward_solve(&m.chol, self.n, &mut z);
            let explained: f64 = z.iter().map(|v| v * v).sum();
            variance.push((m.process_variance * (1.0 - explained)).max(0.0));
        }
        Ok(Prediction { mean, variance })
    }

    pub fn to_archive(&self, provenance: Provenance) -> ModelArchive {
        let doc = serde_json::to_string(&KrigingDoc {
            n_sites: self.n,
            dim: self.dim,
            n_outputs: self.n_out,
            nugget: self.nugget,
        })
        .unwrap();
        let mut a = ModelArchive::new(ArchiveKind::Kriging, doc, provenance);
        a.push_f64("sites", &[self.n, self.dim], self.sites.clone());
        a.push_f64("targets", &[self.n, self.n_out], self.targets.clone());
        for (o, m) in self.outputs.iter().enumerate() {
            a.push_f64(&format!("out{o}.theta"), &[self.dim], m.theta.clone());
            a.push_f64(&format!("out{o}.trend"), &[1], vec![m.trend]);
            a.push_f64(&format!("out{o}.process_variance"), &[1], vec![m.process_variance]);
            a.push_f64(&format!("out{o}.nugget_ratio"), &[1], vec![m.lambda]);
            a.push_f64(&format!("out{o}.chol"), &[self.n, self.n], m.chol.clone());
            a.push_f64(&format!("out{o}.weights"), &[self.n], m.weights.clone());
        }
        a
    }

    pub fn from_archive(a: &ModelArchive) -> Result<Self, IoError> {
        a.expect_kind(ArchiveKind::Kriging)?;
        let doc: KrigingDoc =
            serde_json::from_str(&a.config).map_err(|e| IoError::Format(format!("kriging config: {e}")))?;
        let (n, dim, n_out) = (doc.n_sites, doc.dim, doc.n_outputs);
        let mut outputs = Vec::with_capacity(n_out);
        for o in 0..n_out {
            outputs.push(OutputModel {
                theta: a.f64_array(&format!("out{o}.theta"), dim)?.to_vec(),
                trend: a.f64_array(&format!("out{o}.trend"), 1)?[0],
                process_variance: a.f64_array(&format!("out{o}.process_variance"), 1)?[0],
                lambda: a.f64_array(&format!("out{o}.nugget_ratio"), 1)?[0],
                chol: a.f64_array(&format!("out{o}.chol"), n * n)?.to_vec(),
                weights: a.f64_array(&format!("out{o}.weights"), n)?.to_vec(),
            });
        }
        Ok(Self {
            n,
            dim,
            n_out,
            sites: a.f64_array("sites", n * dim)?.to_vec(),
            targets: a.f64_array("targets", n * n_out)?.to_vec(),
            nugget: doc.nugget,
            outputs,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct KrigingDoc {
    n_sites: usize,
    dim: usize,
    n_outputs: usize,
    nugget: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn two_sites_interpolate() {
        let sites = [vec![0.0, 0.0], vec![1.0, 0.5]];
        let targets = [vec![3.0, 0.9], vec![7.0, 1.1]];
        let m = KrigingModel::fit(&sites, &targets, &KrigingOptions::default()).unwrap();
        for (s, t) in sites.iter().zip(&targets) {
            let p = m.predict(s).unwrap();
            for o in 0..2 {
                assert!(((p.mean[o] - t[o]) / t[o]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constant_target_is_pure_trend() {
        let sites: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.2]).collect();
        let targets = vec![vec![4.2]; 5];
        let m = KrigingModel::fit(&sites, &targets, &KrigingOptions::default()).unwrap();
        for q in [-3.0, 0.1, 0.55, 9.0] {
            let p = m.predict(&[q]).unwrap();
            assert!((p.mean[0] - 4.2).abs() < 1e-6);
        }
    }

    #[test]
    fn symmetric_midpoint() {
        let sites = [vec![0.0], vec![1.0]];
        let targets = [vec![0.0], vec![1.0]];
        let m = KrigingModel::fit(&sites, &targets, &KrigingOptions::default()).unwrap();
        let p = m.predict(&[0.5]).unwrap();
        assert!((p.mean[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let sites: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 / 5.0, (i * i) as f64 / 25.0]).collect();
        let targets: Vec<Vec<f64>> = sites.iter().map(|s| vec![(3.0 * s[0]).sin() + s[1]]).collect();
        let m = KrigingModel::fit(&sites, &targets, &KrigingOptions::default()).unwrap();
        let p = m.predict(&[1e4, -1e4]).unwrap();
        assert!((p.mean[0] - m.trend(0)).abs() < 1e-12);
        assert!((p.variance[0] - m.process_variance(0)).abs() < 1e-12 * m.process_variance(0).max(1.0));
    }

    #[test]
    fn variance_non_negative_and_small_at_sites() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let sites: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.random(), rng.random(), rng.random()]).collect();
        let targets: Vec<Vec<f64>> = sites.iter().map(|s| vec![s[0] * 2.0 + (4.0 * s[1]).cos(), s[2]]).collect();
        let m = KrigingModel::fit(&sites, &targets, &KrigingOptions::default()).unwrap();
        for s in &sites {
            let p = m.predict(s).unwrap();
            for o in 0..2 {
                assert!(p.variance[o] <= 1e-6 * m.process_variance(o));
            }
        }
        for _ in 0..1000 {
            let q = [rng.random_range(-1.0..2.0), rng.random_range(-1.0..2.0), rng.random_range(-1.0..2.0)];
            let p = m.predict(&q).unwrap();
            assert!(p.variance.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn duplicate_sites_without_nugget() {
        let sites = [vec![0.5], vec![0.5], vec![0.1]];
        let targets = [vec![1.0], vec![2.0], vec![3.0]];
        let opts = KrigingOptions { nugget: 0.0, ..Default::default() };
        assert_eq!(KrigingModel::fit(&sites, &targets, &opts), Err(KrigingError::SingularCorrelation));
        assert!(matches!(KrigingModel::fit(&sites[..1], &targets[..1], &opts), Err(KrigingError::TooFewSites(1))));
    }

    #[test]
    fn archive_round_trip() {
        let sites: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.25, 1.0 - i as f64 * 0.1]).collect();
        let targets: Vec<Vec<f64>> = sites.iter().map(|s| vec![s[0] + s[1] * s[1], 1.0 + s[0]]).collect();
        let m = KrigingModel::fit(&sites, &targets, &KrigingOptions::default()).unwrap();
        let a = m.to_archive(Provenance::new("x", 0));
        let back = KrigingModel::from_archive(&ModelArchive::from_bytes(&a.to_bytes()).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_archive(Provenance::new("x", 0)).to_bytes(), a.to_bytes());
    }
}
