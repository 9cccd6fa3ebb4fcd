use super::EvalError;
use crate::spectral::{self, Spectrum};

/// Relative error and spread of one property, in percent.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PropertyMetrics {
    /// Mean over conditions of the mean absolute relative error of the
    /// repeats (REC on calibration data, REP on test data).
    pub rel_error: f64,
    /// Mean over conditions of the sample standard deviation of the repeats
    /// relative to the true value (zero for single repeats).
    pub rsd: f64,
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// `predictions[c]` holds the repeated predictions for condition `c` whose
/// true value is `truths[c]`.
pub fn metrics(predictions: &[Vec<f64>], truths: &[f64]) -> Result<PropertyMetrics, EvalError> {
    if predictions.is_empty() || predictions.len() != truths.len() || predictions.iter().any(|p| p.is_empty()) {
        return Err(EvalError::EmptyInput);
    }
    let n = predictions.len() as f64;
    let mut err = 0.0;
    let mut rsd = 0.0;
    for (p, &t) in predictions.iter().zip(truths) {
        let t_abs = t.abs();
        err += p.iter().map(|v| (v - t).abs() / t_abs).sum::<f64>() / p.len() as f64;
        rsd += sample_std(p) / t_abs;
    }
    Ok(PropertyMetrics { rel_error: 100.0 * err / n, rsd: 100.0 * rsd / n })
}

/// Mean over repeats of the dark-subtracted counts at `pixel`, divided by
/// their sample standard deviation.
pub fn empirical_snr(spectra: &[Spectrum], dark: &Spectrum, pixel: usize) -> Result<f64, EvalError> {
    if spectra.len() < 2 || pixel >= dark.len() {
        return Err(EvalError::EmptyInput);
    }
    let mut v = Vec::with_capacity(spectra.len());
    for s in spectra {
        v.push(spectral::dark_subtract(s, dark)?.intensities()[pixel]);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let sd = sample_std(&v);
    if sd == 0.0 {
        return Err(EvalError::NotStochastic);
    }
    Ok(m / sd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{Stage, WavelengthGrid};

    #[test]
    fn perfect_predictions() {
        let m = metrics(&[vec![2.0, 2.0], vec![5.0]], &[2.0, 5.0]).unwrap();
        assert_eq!(m, PropertyMetrics { rel_error: 0.0, rsd: 0.0 });
    }

    #[test]
    fn hand_computed() {
        let m = metrics(&[vec![9.0, 11.0]], &[10.0]).unwrap();
        assert!((m.rel_error - 10.0).abs() < 1e-12);
        assert!((m.rsd - 2f64.sqrt() * 10.0).abs() < 1e-12);
        let m = metrics(&[vec![9.0], vec![2.4]], &[10.0, 2.0]).unwrap();
        assert!((m.rel_error - 15.0).abs() < 1e-12);
    }

    #[test]
    fn permutation_invariant() {
        let a = metrics(&[vec![1.1, 0.9, 1.3], vec![4.0, 5.5]], &[1.0, 5.0]).unwrap();
        let b = metrics(&[vec![5.5, 4.0], vec![1.3, 1.1, 0.9]], &[5.0, 1.0]).unwrap();
        assert!((a.rel_error - b.rel_error).abs() < 1e-12 && (a.rsd - b.rsd).abs() < 1e-12);
    }

    #[test]
    fn empty_input() {
        assert!(matches!(metrics(&[], &[]), Err(EvalError::EmptyInput)));
        assert!(matches!(metrics(&[vec![]], &[1.0]), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn constant_spectra_are_not_stochastic() {
        let g = WavelengthGrid::new(300.0, 320.0, 5).unwrap();
        let s = Spectrum::new(g, vec![10.0; 5], 0.2, Stage::RawCounts).unwrap();
        let d = Spectrum::new(g, vec![1.0; 5], 0.2, Stage::RawCounts).unwrap();
        assert!(matches!(empirical_snr(&[s.clone(), s], &d, 2), Err(EvalError::NotStochastic)));
    }
}
