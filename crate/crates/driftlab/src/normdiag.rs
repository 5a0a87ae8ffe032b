//! Feature normalization and singular-value diagnostics.
//!
//! Normalization is per-channel z-scoring with population standard
//! deviation; channels that are constant over the dataset get `std = 0`
//! and normalize to zero. Singular values come from a one-sided Jacobi
//! orthogonalization of the columns, which is plenty accurate for 60
//! channels and keeps the diagnostic free of external solvers.

use std::io::Write;

use thiserror::Error;

use crate::mat::{dot, Mat};

#[derive(Debug, Error)]
pub enum NormError {
    #[error("need at least {needed} rows, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("dimension mismatch: stats have {stats} channels, matrix has {matrix}")]
    DimensionMismatch { stats: usize, matrix: usize },
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-channel mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Singular-value spectra of a feature matrix before and after z-scoring.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Spectrum of the raw (uncentered) matrix, descending.
    pub singular_values_raw: Vec<f64>,
    /// Spectrum after z-score normalization, descending.
    pub singular_values_normalized: Vec<f64>,
    pub effective_rank_raw: usize,
    pub effective_rank_normalized: usize,
}

/// Count of singular values above `1e-9` of the largest.
pub fn effective_rank(sigmas: &[f64]) -> usize {
    let max = sigmas.first().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return 0;
    }
    sigmas.iter().filter(|s| **s > 1e-9 * max).count()
}

/// Fits per-column mean and population standard deviation.
///
/// A column whose entries are all identical gets `std = 0` exactly, so the
/// zero-variance rule in [`apply_norm`] kicks in without float noise.
pub fn fit_norm(features: &Mat) -> Result<NormStats, NormError> {
    let n = features.rows();
    if n < 2 {
        return Err(NormError::InsufficientData {
            needed: 2,
            found: n,
        });
    }
    let d = features.cols();
    let mut mean = vec![0.0; d];
    let mut std = vec![0.0; d];
    for j in 0..d {
        let first = features.get(0, j);
        let mut constant = true;
        let mut sum = 0.0;
        for i in 0..n {
            let v = features.get(i, j);
            constant &= v == first;
            sum += v;
        }
        if constant {
            mean[j] = first;
            std[j] = 0.0;
            continue;
        }
        let m = sum / n as f64;
        let var: f64 = (0..n)
            .map(|i| {
                let dlt = features.get(i, j) - m;
                dlt * dlt
            })
            .sum::<f64>()
            / n as f64;
        mean[j] = m;
        std[j] = var.sqrt();
    }
    Ok(NormStats { mean, std })
}

/// Z-scores a matrix with the given stats; zero-variance columns map to 0.
pub fn apply_norm(features: &Mat, stats: &NormStats) -> Result<Mat, NormError> {
    if features.cols() != stats.dim() {
        return Err(NormError::DimensionMismatch {
            stats: stats.dim(),
            matrix: features.cols(),
        });
    }
    let mut out = Mat::zeros(features.rows(), features.cols());
    for i in 0..features.rows() {
        let row = features.row(i);
        let dst = out.row_mut(i);
        for j in 0..row.len() {
            dst[j] = if stats.std[j] == 0.0 {
                0.0
            } else {
                (row[j] - stats.mean[j]) / stats.std[j]
            };
        }
    }
    Ok(out)
}

/// Z-scores a single vector with the given stats.
pub fn apply_norm_vec(x: &[f64], stats: &NormStats) -> Result<Vec<f64>, NormError> {
    if x.len() != stats.dim() {
        return Err(NormError::DimensionMismatch {
            stats: stats.dim(),
            matrix: x.len(),
        });
    }
    Ok(x.iter()
        .enumerate()
        .map(|(j, v)| {
            if stats.std[j] == 0.0 {
                0.0
            } else {
                (v - stats.mean[j]) / stats.std[j]
            }
        })
        .collect())
}

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 60;

/// Singular values of an `N x D` matrix, descending, all `D` of them
/// (rank-deficient directions come out as ~0).
///
/// One-sided Jacobi: rotate column pairs until every pair's inner product
/// is below `1e-12` times the product of their norms (at most 60 sweeps),
/// then read off the column norms.
pub fn singular_values(m: &Mat) -> Result<Vec<f64>, NormError> {
    if !m.all_finite() {
        return Err(NormError::NonFiniteInput);
    }
    let n = m.rows();
    let d = m.cols();
    if n == 0 || d == 0 {
        return Ok(vec![0.0; d]);
    }

    // column-major working copy
    let mut cols: Vec<Vec<f64>> = (0..d).map(|j| m.col(j)).collect();
    let mut norms_sq: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();

    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..d {
            for q in (p + 1)..d {
                let app = norms_sq[p];
                let aqq = norms_sq[q];
                let apq = dot(&cols[p], &cols[q]);
                if apq.abs() <= JACOBI_TOL * app.sqrt() * aqq.sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let vp = cols[p][i];
                    let vq = cols[q][i];
                    cols[p][i] = c * vp - s * vq;
                    cols[q][i] = s * vp + c * vq;
                }
                norms_sq[p] = dot(&cols[p], &cols[p]);
                norms_sq[q] = dot(&cols[q], &cols[q]);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigmas: Vec<f64> = norms_sq.iter().map(|v| v.sqrt()).collect();
    sigmas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(sigmas)
}

/// Computes raw and normalized spectra of a feature matrix.
///
/// The raw spectrum is taken on the uncentered matrix; the normalized one
/// after [`fit_norm`]/[`apply_norm`].
pub fn spectrum_report(features: &Mat) -> Result<SpectrumReport, NormError> {
    let raw = singular_values(features)?;
    let stats = fit_norm(features)?;
    let normalized_mat = apply_norm(features, &stats)?;
    let normalized = singular_values(&normalized_mat)?;
    Ok(SpectrumReport {
        effective_rank_raw: effective_rank(&raw),
        effective_rank_normalized: effective_rank(&normalized),
        singular_values_raw: raw,
        singular_values_normalized: normalized,
    })
}

/// Writes one spectrum variant as a two-column `index, sigma` CSV.
pub fn write_spectrum_csv<W: Write>(sigmas: &[f64], mut writer: W) -> Result<(), NormError> {
    writeln!(writer, "index,sigma")?;
    for (i, s) in sigmas.iter().enumerate() {
        writeln!(writer, "{i},{s}")?;
    }
    Ok(())
}
