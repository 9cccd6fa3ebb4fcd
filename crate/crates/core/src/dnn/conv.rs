//! Same-padded, stride-1 cross-correlation over channel-major signals.

/// Shape of one convolution layer. Weights are `c_out x c_in x k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
}

impl ConvShape {
    pub fn weight_len(&self) -> usize {
        self.c_out * self.c_in * self.k
    }
}

/// `y = conv(x) + b` for one sample of length `l`.
pub fn forward(s: ConvShape, x: &[f64], w: &[f64], b: &[f64], l: usize, y: &mut [f64]) {
    let pad = s.k / 2;
    for o in 0..s.c_out {
        let yo = &mut y[o * l..(o + 1) * l];
        yo.fill(b[o]);
        for i in 0..s.c_in {
            let xi = &x[i * l..(i + 1) * l];
            for t in 0..s.k {
                let wt = w[(o * s.c_in + i) * s.k + t];
                if wt == 0.0 {
                    continue;
                }
                // y[p] += wt * x[p + t - pad]
                let (lo, hi) = (pad.saturating_sub(t), (l + pad).saturating_sub(t).min(l));
                if lo >= hi {
                    continue;
                }
                let src = &xi[lo + t - pad..hi + t - pad];
                for (yv, xv) in yo[lo..hi].iter_mut().zip(src) {
                    *yv += wt * xv;
                }
            }
        }
    }
}

/// Accumulates weight and bias gradients and writes the input gradient.
#[allow(clippy::too_many_arguments)]
pub fn backward(
    s: ConvShape,
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    l: usize,
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    let pad = s.k / 2;
    for o in 0..s.c_out {
        let dyo = &dy[o * l..(o + 1) * l];
        db[o] += dyo.iter().sum::<f64>();
        for i in 0..s.c_in {
            let xi = &x[i * l..(i + 1) * l];
            for t in 0..s.k {
                let (lo, hi) = (pad.saturating_sub(t), (l + pad).saturating_sub(t).min(l));
                if lo >= hi {
                    continue;
                }
                let src = &xi[lo + t - pad..hi + t - pad];
                dw[(o * s.c_in + i) * s.k + t] += dyo[lo..hi].iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    if let Some(dx) = dx {
        dx.fill(0.0);
        for o in 0..s.c_out {
            let dyo = &dy[o * l..(o + 1) * l];
            for i in 0..s.c_in {
                let dxi = &mut dx[i * l..(i + 1) * l];
                for t in 0..s.k {
                    let wt = w[(o * s.c_in + i) * s.k + t];
                    let (lo, hi) = (pad.saturating_sub(t), (l + pad).saturating_sub(t).min(l));
                    if lo >= hi {
                        continue;
                    }
                    for (d, g) in dxi[lo + t - pad..hi + t - pad].iter_mut().zip(&dyo[lo..hi]) {
                        *d += wt * g;
                    }
                }
            }
        }
    }
}
