//! Per-channel batch normalization over the batch and length axes.
//!
//! Activations are laid out `batch x channels x length`.

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Statistics kept from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub mean: Vec<f64>,
    /// Biased batch variance.
    pub var: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub count: usize,
}

pub fn forward_train(x: &[f64], c: usize, l: usize, gamma: &[f64], beta: &[f64], y: &mut [f64]) -> BnCache {
    let b = x.len() / (c * l);
    let n = b * l;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut s = 0.0;
        for s_i in 0..b {
            s += x[(s_i * c + ch) * l..(s_i * c + ch + 1) * l].iter().sum::<f64>();
        }
        let m = s / n as f64;
        let mut v = 0.0;
        for s_i in 0..b {
            v += x[(s_i * c + ch) * l..(s_i * c + ch + 1) * l]
                .iter()
                .map(|&z| (z - m) * (z - m))
                .sum::<f64>();
        }
        mean[ch] = m;
        var[ch] = v / n as f64;
    }
    let mut x_hat = vec![0.0; x.len()];
    for s_i in 0..b {
        for ch in 0..c {
            let inv = 1.0 / (var[ch] + BN_EPS).sqrt();
            let r = (s_i * c + ch) * l..(s_i * c + ch + 1) * l;
            for p in r {
                x_hat[p] = (x[p] - mean[ch]) * inv;
                y[p] = gamma[ch] * x_hat[p] + beta[ch];
            }
        }
    }
    BnCache { mean, var, x_hat, count: n }
}

pub fn forward_infer(x: &[f64], c: usize, l: usize, gamma: &[f64], beta: &[f64], mean: &[f64], var: &[f64], y: &mut [f64]) {
    let b = x.len() / (c * l);
    for s_i in 0..b {
        for ch in 0..c {
            let scale = gamma[ch] / (var[ch] + BN_EPS).sqrt();
            let r = (s_i * c + ch) * l..(s_i * c + ch + 1) * l;
            for p in r {
                y[p] = (x[p] - mean[ch]) * scale + beta[ch];
            }
        }
    }
}

/// Accumulates `dgamma`, `dbeta` and returns the input gradient.
pub fn backward(cache: &BnCache, c: usize, l: usize, gamma: &[f64], dy: &[f64], dgamma: &mut [f64], dbeta: &mut [f64]) -> Vec<f64> {
    let b = dy.len() / (c * l);
    let n = cache.count as f64;
    let mut dx = vec![0.0; dy.len()];
    for ch in 0..c {
        let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
        for s_i in 0..b {
            let r = (s_i * c + ch) * l..(s_i * c + ch + 1) * l;
            for p in r {
                sum_dy += dy[p];
                sum_dy_xhat += dy[p] * cache.x_hat[p];
            }
        }
        dbeta[ch] += sum_dy;
        dgamma[ch] += sum_dy_xhat;
        let k = gamma[ch] / (cache.var[ch] + BN_EPS).sqrt() / n;
        for s_i in 0..b {
            let r = (s_i * c + ch) * l..(s_i * c + ch + 1) * l;
            for p in r {
                dx[p] = k * (n * dy[p] - sum_dy - cache.x_hat[p] * sum_dy_xhat);
            }
        }
    }
    dx
}

/// Exponential update of running statistics; variance uses the unbiased
/// batch estimate.
pub fn update_running(cache: &BnCache, running_mean: &mut [f64], running_var: &mut [f64]) {
    let n = cache.count as f64;
    let unbias = if cache.count > 1 { n / (n - 1.0) } else { 1.0 };
    for ch in 0..running_mean.len() {
        running_mean[ch] = (1.0 - BN_MOMENTUM) * running_mean[ch] + BN_MOMENTUM * cache.mean[ch];
        running_var[ch] = (1.0 - BN_MOMENTUM) * running_var[ch] + BN_MOMENTUM * cache.var[ch] * unbias;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn normalizes_each_channel() {
        let (c, l) = (2, 4);
        let x: Vec<f64> = (0..3 * c * l).map(|i| (i * i) as f64 * 0.1).collect();
        let mut y = vec![0.0; x.len()];
        let cache = forward_train(&x, c, l, &[1.0, 1.0], &[0.0, 0.0], &mut y);
        for ch in 0..c {
            let vals: Vec<f64> = (0..3).flat_map(|s| y[(s * c + ch) * l..(s * c + ch + 1) * l].to_vec()).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|z| (z - m) * (z - m)).sum::<f64>() / vals.len() as f64;
            assert!(m.abs() < 1e-12);
            assert!((v - cache.var[ch] / (cache.var[ch] + BN_EPS)).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (c, l, b) = (2, 3, 2);
        let x: Vec<f64> = (0..b * c * l).map(|_| rng.random_range(-2.0..2.0)).collect();
        let gamma = [1.3, 0.7];
        let beta = [0.2, -0.4];
        let g: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let obj = |x: &[f64], gamma: &[f64], beta: &[f64]| {
            let mut y = vec![0.0; x.len()];
            forward_train(x, c, l, gamma, beta, &mut y);
            y.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut y = vec![0.0; x.len()];
        let cache = forward_train(&x, c, l, &gamma, &beta, &mut y);
        let (mut dg, mut db) = (vec![0.0; c], vec![0.0; c]);
        let dx = backward(&cache, c, l, &gamma, &g, &mut dg, &mut db);
        let h = 1e-6;
        for i in 0..x.len() {
            let (mut p, mut m) = (x.clone(), x.clone());
            p[i] += h;
            m[i] -= h;
            let fd = (obj(&p, &gamma, &beta) - obj(&m, &gamma, &beta)) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-6, "{fd} vs {}", dx[i]);
        }
        for ch in 0..c {
            let (mut p, mut m) = (gamma, gamma);
            p[ch] += h;
            m[ch] -= h;
            assert!(((obj(&x, &p, &beta) - obj(&x, &m, &beta)) / (2.0 * h) - dg[ch]).abs() < 1e-6);
            let (mut p, mut m) = (beta, beta);
            p[ch] += h;
            m[ch] -= h;
            assert!(((obj(&x, &gamma, &p) - obj(&x, &gamma, &m)) / (2.0 * h) - db[ch]).abs() < 1e-6);
        }
    }

    #[test]
    fn running_stats_use_unbiased_variance() {
        let cache = BnCache { mean: vec![2.0], var: vec![1.0], x_hat: vec![], count: 4 };
        let (mut m, mut v) = (vec![0.0], vec![1.0]);
        update_running(&cache, &mut m, &mut v);
        assert!((m[0] - 0.2).abs() < 1e-15);
        assert!((v[0] - (0.9 + 0.1 * 4.0 / 3.0)).abs() < 1e-15);
    }
}
