//! Blend of squared reconstruction error and squared error between
//! min-max normalized POD coefficients.

use super::DnnError;
use crate::pod::PodModel;

/// Mean over the batch of
/// `(1 - alpha) |pred - target|^2 + alpha |POD(pred) - POD(target)|^2`,
/// with squared norms summed over pixels (resp. coefficients). Returns the
/// loss and its gradient with respect to `pred`.
///
/// `pod` may be `None` only when `alpha == 0`.
pub fn composite_loss(
    pred: &[f64],
    target: &[f64],
    width: usize,
    pod: Option<&PodModel>,
    alpha: f64,
) -> Result<(f64, Vec<f64>), DnnError> {
    if width == 0 || pred.len() != target.len() || !pred.len().is_multiple_of(width) || pred.is_empty() {
        return Err(DnnError::ShapeMismatch(format!(
            "prediction ({}) and target ({}) are not whole spectra of width {width}",
            pred.len(),
            target.len()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(DnnError::ConfigInvalid(format!("alpha {alpha} outside [0, 1]")));
    }
    let pod = match pod {
        Some(p) if p.width() != width => {
            return Err(DnnError::ShapeMismatch(format!("POD width {} vs spectra width {width}", p.width())))
        }
        Some(p) => Some(p),
        None if alpha > 0.0 => return Err(DnnError::ConfigInvalid("alpha > 0 needs a POD model".into())),
        None => None,
    };
    let batch = pred.len() / width;
    let scale = 1.0 / batch as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for n in 0..batch {
        let r = n * width..(n + 1) * width;
        let (p, t) = (&pred[r.clone()], &target[r.clone()]);
        let g = &mut grad[r];
        let mut sq = 0.0;
        for i in 0..width {
            let d = p[i] - t[i];
            sq += d * d;
            g[i] = 2.0 * (1.0 - alpha) * d * scale;
        }
        loss += (1.0 - alpha) * sq;
        if let Some(pod) = pod.filter(|_| alpha > 0.0) {
            for j in 0..pod.k() {
                let b = pod.basis().basis(j);
                let range = pod.coeff_range(j);
                let dc: f64 = p.iter().zip(t).zip(b).map(|((a, c), bj)| (a - c) * bj).sum::<f64>() / range;
                loss += alpha * dc * dc;
                let k = 2.0 * alpha * dc / range * scale;
                g.iter_mut().zip(b).for_each(|(gi, bj)| *gi += k * bj);
            }
        }
    }
    Ok((loss * scale, grad))
}
