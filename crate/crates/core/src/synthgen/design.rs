//! Experiment designs over the (P, phi) envelope.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ccd::stream_rng;
use super::SynthError;
use crate::spectral::{GasCondition, PHI_RANGE, PRESSURE_RANGE_BAR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    FullFactorial,
    LatinHypercube,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingPlan {
    pub kind: PlanKind,
    /// Factorial: pressure levels. Latin hypercube: sample count.
    pub pressure_levels: usize,
    /// Factorial: equivalence-ratio levels. Ignored for Latin hypercube.
    pub phi_levels: usize,
    pub pressure_range: (f64, f64),
    pub phi_range: (f64, f64),
    pub seed: u64,
}

impl SamplingPlan {
    pub fn full_factorial(pressure_levels: usize, phi_levels: usize) -> Self {
        Self {
            kind: PlanKind::FullFactorial,
            pressure_levels,
            phi_levels,
            pressure_range: PRESSURE_RANGE_BAR,
            phi_range: PHI_RANGE,
            seed: 0,
        }
    }

    /// 5 pressure x 10 equivalence-ratio levels.
    pub fn default_factorial() -> Self {
        Self::full_factorial(5, 10)
    }

    pub fn latin_hypercube(n: usize, seed: u64) -> Self {
        Self {
            kind: PlanKind::LatinHypercube,
            pressure_levels: n,
            phi_levels: n,
            pressure_range: PRESSURE_RANGE_BAR,
            phi_range: PHI_RANGE,
            seed,
        }
    }

    fn check(&self, kind: PlanKind) -> Result<(), SynthError> {
        if self.kind != kind {
            return Err(SynthError::BadPlan(format!("expected a {kind:?} plan")));
        }
        if self.pressure_levels == 0 || (kind == PlanKind::FullFactorial && self.phi_levels == 0) {
            return Err(SynthError::BadPlan("level counts must be at least 1".into()));
        }
        let inside = |r: (f64, f64), env: (f64, f64)| r.0 <= r.1 && r.0 >= env.0 && r.1 <= env.1;
        if !inside(self.pressure_range, PRESSURE_RANGE_BAR) || !inside(self.phi_range, PHI_RANGE) {
            return Err(SynthError::BadPlan("ranges must lie inside the supported envelope".into()));
        }
        Ok(())
    }
}

fn levels(n: usize, (lo, hi): (f64, f64)) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Cartesian product of equally spaced levels, pressure-major.
pub fn full_factorial(plan: &SamplingPlan) -> Result<Vec<GasCondition>, SynthError> {
    plan.check(PlanKind::FullFactorial)?;
    let ps = levels(plan.pressure_levels, plan.pressure_range);
    let phis = levels(plan.phi_levels, plan.phi_range);
    Ok(ps
        .iter()
        .flat_map(|&p| {
            phis.iter().map(move |&phi| GasCondition {
                pressure_bar: p,
                equivalence_ratio: phi,
            })
        })
        .collect())
}

/// Stratified design: each axis split into `n` equal strata, one sample per
/// stratum per axis, uniform within the stratum.
pub fn latin_hypercube(plan: &SamplingPlan) -> Result<Vec<GasCondition>, SynthError> {
    plan.check(PlanKind::LatinHypercube)?;
    let n = plan.pressure_levels;
    let mut rng = stream_rng(plan.seed, 0x4c48_5300);
    let axis = |(lo, hi): (f64, f64), rng: &mut rand_chacha::ChaCha8Rng| {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        strata
            .into_iter()
            .map(|k| {
                let u: f64 = rng.random();
                lo + (hi - lo) * (k as f64 + u) / n as f64
            })
            .collect::<Vec<f64>>()
    };
    let ps = axis(plan.pressure_range, &mut rng);
    let phis = axis(plan.phi_range, &mut rng);
    Ok(ps
        .into_iter()
        .zip(phis)
        .map(|(p, phi)| GasCondition {
            pressure_bar: p,
            equivalence_ratio: phi,
        })
        .collect())
}
