//! Linear-warmup cosine annealing with warm restarts and decaying peaks.

use serde::{Deserialize, Serialize};

use super::DnnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Length of the first cycle, in scheduler steps.
    pub t0: usize,
    /// Cycle length multiplier.
    pub t_mult: usize,
    pub eta_max: f64,
    /// Warmup length at the start of each cycle.
    pub t_up: usize,
    /// Peak decay per cycle.
    pub gamma: f64,
    pub eta_min: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            t0: 50,
            t_mult: 1,
            eta_max: 0.005,
            t_up: 10,
            gamma: 0.1,
            eta_min: 0.0,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<(), DnnError> {
        let bad = |m: &str| Err(DnnError::ConfigInvalid(format!("schedule: {m}")));
        if self.t0 == 0 || self.t_mult == 0 {
            return bad("t0 and t_mult must be positive");
        }
        if self.t_up >= self.t0 {
            return bad("t_up must be shorter than t0");
        }
        if !(self.eta_max > 0.0 && self.gamma > 0.0 && self.eta_min >= 0.0 && self.eta_min <= self.eta_max) {
            return bad("need eta_max > 0, gamma > 0 and 0 <= eta_min <= eta_max");
        }
        Ok(())
    }

    /// Learning rate at scheduler step `step`.
    pub fn lr(&self, step: usize) -> f64 {
        let (mut start, mut len, mut cycle) = (0usize, self.t0, 0i32);
        while step >= start + len {
            start += len;
            len *= self.t_mult;
            cycle += 1;
        }
        let t = step - start;
        let peak = self.eta_max * self.gamma.powi(cycle);
        if t < self.t_up {
            self.eta_min + (peak - self.eta_min) * t as f64 / self.t_up as f64
        } else {
            let frac = (t - self.t_up) as f64 / (len - self.t_up) as f64;
            self.eta_min + (peak - self.eta_min) * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_constants() {
        let s = ScheduleConfig::default();
        assert_eq!(s.lr(0), 0.0);
        assert!((s.lr(10) - 0.005).abs() < 1e-15);
        assert_eq!(s.lr(50), 0.0);
        assert!((s.lr(60) - 0.0005).abs() < 1e-15);
        assert!((s.lr(5) - 0.0025).abs() < 1e-15);
        // halfway through the cosine segment
        assert!((s.lr(30) - 0.0025).abs() < 1e-15);
        assert!(s.lr(49) > 0.0 && s.lr(49) < 1e-5);
    }

    #[test]
    fn peaks_and_continuity() {
        let s = ScheduleConfig { t_mult: 2, ..Default::default() };
        let mut start = 0;
        let mut len = 50;
        for c in 0..4 {
            let peak = s.lr(start + s.t_up);
            assert!((peak - 0.005 * 0.1f64.powi(c)).abs() < 1e-15);
            for t in start..start + len {
                assert!(s.lr(t) <= peak + 1e-18);
                if t + 1 < start + len {
                    assert!((s.lr(t + 1) - s.lr(t)).abs() <= peak / s.t_up as f64 + 1e-15);
                }
            }
            start += len;
            len *= 2;
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(ScheduleConfig { t_up: 50, ..Default::default() }.validate().is_err());
        assert!(ScheduleConfig { gamma: 0.0, ..Default::default() }.validate().is_err());
        assert!(ScheduleConfig::default().validate().is_ok());
    }
}
