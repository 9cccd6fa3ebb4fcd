//! Reversible down/up-sampling (pixel unshuffle and shuffle) in one dimension.

use super::DnnError;

/// Length of each sub-signal for a width-`w` input split `nd` ways.
pub fn sub_len(w: usize, nd: usize) -> usize {
    w.div_ceil(nd)
}

/// Splits `x` into `nd` interleaved sub-signals, channel-major
/// (`nd x ceil(W/nd)`). Sub-signal `j` holds pixels `j, j+nd, j+2nd, ...`;
/// positions past the end of `x` are zero.
pub fn downsample(x: &[f64], nd: usize) -> Vec<f64> {
    let l = sub_len(x.len(), nd);
    let mut out = vec![0.0; nd * l];
    for (p, &v) in x.iter().enumerate() {
        out[(p % nd) * l + p / nd] = v;
    }
    out
}

/// Inverse of [`downsample`], cropping back to width `w`.
pub fn upsample(subs: &[f64], nd: usize, w: usize) -> Result<Vec<f64>, DnnError> {
    let l = sub_len(w, nd);
    if nd == 0 || subs.len() != nd * l {
        return Err(DnnError::ShapeMismatch(format!(
            "{} values cannot hold {nd} sub-signals of length {l}",
            subs.len()
        )));
    }
    Ok((0..w).map(|p| subs[(p % nd) * l + p / nd]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interleaves() {
        let x: Vec<f64> = (1..=8).map(f64::from).collect();
        assert_eq!(downsample(&x, 2), vec![1.0, 3.0, 5.0, 7.0, 2.0, 4.0, 6.0, 8.0]);
        assert_eq!(downsample(&x, 1), x);
        assert_eq!(downsample(&x[..7], 2), vec![1.0, 3.0, 5.0, 7.0, 2.0, 4.0, 6.0, 0.0]);
    }

    #[test]
    fn zeros_and_single_channel() {
        assert_eq!(upsample(&[0.0; 6], 3, 5).unwrap(), vec![0.0; 5]);
        assert_eq!(upsample(&[4.0, 5.0], 1, 2).unwrap(), vec![4.0, 5.0]);
        assert!(upsample(&[0.0; 5], 3, 5).is_err());
    }

    #[test]
    fn permutation_matrix_is_identity() {
        let (w, nd) = (12, 3);
        let mut m = vec![0.0; w * w];
        for c in 0..w {
            let mut e = vec![0.0; w];
            e[c] = 1.0;
            let back = upsample(&downsample(&e, nd), nd, w).unwrap();
            for r in 0..w {
                m[r * w + c] = back[r];
            }
        }
        for r in 0..w {
            for c in 0..w {
                assert_eq!(m[r * w + c], if r == c { 1.0 } else { 0.0 });
            }
        }
    }
}
