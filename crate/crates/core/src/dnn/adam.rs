//! Adam with bias-corrected moments.

use serde::{Deserialize, Serialize};

use super::DnnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    pub fn step(&mut self, cfg: &AdamConfig, params: &mut [f64], grads: &[f64], lr: f64) -> Result<(), DnnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(DnnError::ShapeMismatch(format!(
                "optimizer holds {} moments, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        s.step(&AdamConfig::default(), &mut p, &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![0.0, 0.0, 0.0];
        let mut s = AdamState::new(3);
        let lr = 0.01;
        s.step(&AdamConfig::default(), &mut p, &[3.0, -0.5, 1e-3], lr).unwrap();
        // step 1: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps)
        for (x, g) in p.iter().zip([3.0f64, -0.5, 1e-3]) {
            let expect = -lr * g / (g.abs() + 1e-8);
            assert!((x - expect).abs() < 1e-15);
            assert!(x.abs() <= lr);
        }
        assert!(s.step(&AdamConfig::default(), &mut p, &[1.0], lr).is_err());
    }
}
