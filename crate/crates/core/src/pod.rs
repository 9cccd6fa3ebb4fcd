//! Snapshot proper orthogonal decomposition of OH*-normalized spectra.
//!
//! The snapshot matrix (one spectrum per row) is decomposed without mean
//! subtraction, so the leading basis carries the mean spectral profile.
//! Bases are oriented with their largest-magnitude entry positive.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{ArchiveKind, IoError, ModelArchive, Provenance};

pub const DEFAULT_RANK: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PodError {
    #[error("vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("snapshot matrix has rank {rank}, fewer than the requested {k} bases")]
    RankDeficient { rank: usize, k: usize },
    #[error("coefficient {index} takes a single value over the training set; cannot min-max normalize")]
    DegenerateBound { index: usize },
    #[error("invalid POD input: {0}")]
    InvalidInput(String),
}

/// Orthonormal spectral bases with their singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    width: usize,
    /// Row-major `k x width`.
    bases: Vec<f64>,
    singular_values: Vec<f64>,
    energy_fraction: Vec<f64>,
}

/// Bases plus the min-max bounds of the training coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PodModel {
    basis: PodBasis,
    coeff_min: Vec<f64>,
    coeff_max: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PodDoc {
    k: usize,
    width: usize,
}

/// Top-`k` right singular vectors of the snapshot matrix.
pub fn fit_basis<S: AsRef<[f64]>>(snapshots: &[S], k: usize) -> Result<PodBasis, PodError> {
    let n = snapshots.len();
    if k == 0 {
        return Err(PodError::InvalidInput("rank must be at least 1".into()));
    }
    if n < k {
        return Err(PodError::InvalidInput(format!("{n} snapshots cannot support {k} bases")));
    }
    let width = snapshots[0].as_ref().len();
    if width == 0 {
        return Err(PodError::InvalidInput("empty snapshots".into()));
    }
    for s in snapshots {
        if s.as_ref().len() != width {
            return Err(PodError::LengthMismatch { expected: width, got: s.as_ref().len() });
        }
    }
    let data: Vec<f64> = snapshots.iter().flat_map(|s| s.as_ref().iter().copied()).collect();
    let x = DMatrix::from_row_slice(n, width, &data);
    let total_energy: f64 = data.iter().map(|v| v * v).sum();
    if total_energy == 0.0 {
        return Err(PodError::RankDeficient { rank: 0, k });
    }

    // eigendecomposition of the smaller Gram matrix
    let snapshot_side = n <= width;
    let gram = if snapshot_side { &x * x.transpose() } else { x.transpose() * &x };
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let sigma = |i: usize| eig.eigenvalues[i].max(0.0).sqrt();
    let sigma_max = sigma(order[0]);
    let tol = n.max(width) as f64 * f64::EPSILON.sqrt() * sigma_max;
    let rank = order.iter().filter(|&&i| sigma(i) > tol).count();
    if rank < k {
        return Err(PodError::RankDeficient { rank, k });
    }

    let mut bases = Vec::with_capacity(k * width);
    let mut singular_values = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let s = sigma(i);
        let v = eig.eigenvectors.column(i);
        let mut row: Vec<f64> = if snapshot_side {
            // b = X^T u / sigma
            (x.transpose() * v).iter().map(|c| c / s).collect()
        } else {
            v.iter().copied().collect()
        };
        let norm = row.iter().map(|c| c * c).sum::<f64>().sqrt();
        row.iter_mut().for_each(|c| *c /= norm);
        let pivot = row
            .iter()
            .copied()
            .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        bases.extend(row);
        singular_values.push(s);
    }
    let energy_fraction = singular_values.iter().map(|s| s * s / total_energy).collect();
    Ok(PodBasis {
        width,
        bases,
        singular_values,
        energy_fraction,
    })
}

/// Fits bases and freezes the min-max bounds of the training coefficients.
pub fn fit<S: AsRef<[f64]>>(snapshots: &[S], k: usize) -> Result<PodModel, PodError> {
    let basis = fit_basis(snapshots, k)?;
    let mut coeff_min = vec![f64::INFINITY; k];
    let mut coeff_max = vec![f64::NEG_INFINITY; k];
    for s in snapshots {
        let c = basis.project(s.as_ref())?;
        for j in 0..k {
            coeff_min[j] = coeff_min[j].min(c[j]);
            coeff_max[j] = coeff_max[j].max(c[j]);
        }
    }
    PodModel::from_parts(basis, coeff_min, coeff_max)
}

impl PodBasis {
    pub fn k(&self) -> usize {
        self.singular_values.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn basis(&self, j: usize) -> &[f64] {
        &self.bases[j * self.width..(j + 1) * self.width]
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn energy_fraction(&self) -> &[f64] {
        &self.energy_fraction
    }

    pub fn cumulative_energy(&self) -> f64 {
        self.energy_fraction.iter().sum()
    }

    fn check_len(&self, got: usize) -> Result<(), PodError> {
        if got == self.width {
            Ok(())
        } else {
            Err(PodError::LengthMismatch { expected: self.width, got })
        }
    }

    /// Raw coefficients `c_j = <s, b_j>`.
    pub fn project(&self, s: &[f64]) -> Result<Vec<f64>, PodError> {
        self.check_len(s.len())?;
        Ok((0..self.k())
            .map(|j| self.basis(j).iter().zip(s).map(|(b, v)| b * v).sum())
            .collect())
    }

    pub fn reconstruct(&self, c: &[f64]) -> Result<Vec<f64>, PodError> {
        if c.len() != self.k() {
            return Err(PodError::LengthMismatch { expected: self.k(), got: c.len() });
        }
        let mut out = vec![0.0; self.width];
        for (j, &cj) in c.iter().enumerate() {
            for (o, b) in out.iter_mut().zip(self.basis(j)) {
                *o += cj * b;
            }
        }
        Ok(out)
    }

    /// Largest deviation of the Gram matrix of the bases from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.k() {
            for j in 0..=i {
                let dot: f64 = self.basis(i).iter().zip(self.basis(j)).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

impl PodModel {
    pub fn from_parts(basis: PodBasis, coeff_min: Vec<f64>, coeff_max: Vec<f64>) -> Result<Self, PodError> {
        let k = basis.k();
        if coeff_min.len() != k || coeff_max.len() != k {
            return Err(PodError::LengthMismatch { expected: k, got: coeff_min.len().min(coeff_max.len()) });
        }
        for j in 0..k {
            if !(coeff_max[j] > coeff_min[j]) {
                return Err(PodError::DegenerateBound { index: j });
            }
        }
        Ok(Self { basis, coeff_min, coeff_max })
    }

    pub fn basis(&self) -> &PodBasis {
        &self.basis
    }

    pub fn k(&self) -> usize {
        self.basis.k()
    }

    pub fn width(&self) -> usize {
        self.basis.width
    }

    pub fn coeff_min(&self) -> &[f64] {
        &self.coeff_min
    }

    pub fn coeff_max(&self) -> &[f64] {
        &self.coeff_max
    }

    pub fn coeff_range(&self, j: usize) -> f64 {
        self.coeff_max[j] - self.coeff_min[j]
    }

    pub fn project(&self, s: &[f64]) -> Result<Vec<f64>, PodError> {
        self.basis.project(s)
    }

    pub fn reconstruct(&self, c: &[f64]) -> Result<Vec<f64>, PodError> {
        self.basis.reconstruct(c)
    }

    /// Min-max normalized coefficients; values outside [0, 1] are kept.
    pub fn normalized_coeffs(&self, s: &[f64]) -> Result<Vec<f64>, PodError> {
        let c = self.basis.project(s)?;
        Ok(c.iter()
            .enumerate()
            .map(|(j, &cj)| (cj - self.coeff_min[j]) / self.coeff_range(j))
            .collect())
    }

    pub fn to_archive(&self, provenance: Provenance) -> ModelArchive {
        let doc = serde_json::to_string(&PodDoc { k: self.k(), width: self.width() }).unwrap();
        let mut a = ModelArchive::new(ArchiveKind::Pod, doc, provenance);
        a.push_f64("bases", &[self.k(), self.width()], self.basis.bases.clone());
        a.push_f64("singular_values", &[self.k()], self.basis.singular_values.clone());
        a.push_f64("energy_fraction", &[self.k()], self.basis.energy_fraction.clone());
        a.push_f64("coeff_min", &[self.k()], self.coeff_min.clone());
        a.push_f64("coeff_max", &[self.k()], self.coeff_max.clone());
        a
    }

    pub fn from_archive(a: &ModelArchive) -> Result<Self, IoError> {
        a.expect_kind(ArchiveKind::Pod)?;
        let doc: PodDoc = serde_json::from_str(&a.config).map_err(|e| IoError::Format(format!("pod config: {e}")))?;
        let (k, w) = (doc.k, doc.width);
        let basis = PodBasis {
            width: w,
            bases: a.f64_array("bases", k * w)?.to_vec(),
            singular_values: a.f64_array("singular_values", k)?.to_vec(),
            energy_fraction: a.f64_array("energy_fraction", k)?.to_vec(),
        };
        Self::from_parts(
            basis,
            a.f64_array("coeff_min", k)?.to_vec(),
            a.f64_array("coeff_max", k)?.to_vec(),
        )
        .map_err(|e| IoError::Format(e.to_string()))
    }
}
