//! ε-insensitive support vector regression, trained per axis.
//!
//! Features are z-scored with stats fit on the training set, the dual is
//! solved by [`smo`], and the two axis models share those normalization
//! stats. Prediction is `f(x) = Σ βᵢ K(sᵢ, x̃) + b` in normalized space.

mod io;
mod kernel;
pub mod smo;

use std::sync::Arc;

use thiserror::Error;

pub use io::{load_model, save_model};
pub use kernel::{FullGram, Gram, KernelSpec, LruGram};
pub use smo::{SmoParams, SmoSolution};

use crate::mat::Mat;
use crate::normdiag::{apply_norm, apply_norm_vec, fit_norm, NormStats};
use crate::parallel::*;
use crate::telemetry::RegressionDataset;

#[derive(Debug, Error)]
pub enum SvrError {
    #[error("need at least {needed} training rows, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("solver did not converge within {iterations} pair updates")]
    NoConvergence { iterations: u64 },
    #[error("dimension mismatch: model expects {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported model format: `{found}`")]
    VersionMismatch { found: String },
    #[error("corrupt model payload at line {line}: {reason}")]
    CorruptPayload { line: usize, reason: String },
}

/// Coefficients below this are not support vectors.
pub const SUPPORT_CUTOFF: f64 = 1e-12;

/// One trained axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    pub kernel: KernelSpec,
    /// M x D support vectors, already normalized.
    pub support_vectors: Mat,
    /// β = α − α*, one per support vector, each in [−C, C].
    pub dual_coeffs: Vec<f64>,
    pub bias: f64,
    pub norm: NormStats,
    pub c: f64,
    pub epsilon: f64,
}

impl SvrModel {
    pub fn dim(&self) -> usize {
        self.norm.dim()
    }

    pub fn num_support_vectors(&self) -> usize {
        self.dual_coeffs.len()
    }

    /// Decision function on an already-normalized input.
    pub fn predict_normalized(&self, xn: &[f64]) -> f64 {
        let mut f = self.bias;
        for (i, beta) in self.dual_coeffs.iter().enumerate() {
            f += beta * self.kernel.eval(self.support_vectors.row(i), xn);
        }
        f
    }

    /// Predicted drift velocity for a raw onboard vector.
    pub fn predict(&self, onboard: &[f64]) -> Result<f64, SvrError> {
        if onboard.len() != self.dim() {
            return Err(SvrError::DimensionMismatch {
                expected: self.dim(),
                found: onboard.len(),
            });
        }
        let xn = apply_norm_vec(onboard, &self.norm).expect("dimension checked above");
        Ok(self.predict_normalized(&xn))
    }
}

/// The paper's two independently trained axis regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrPair {
    pub model_x: SvrModel,
    pub model_y: SvrModel,
}

impl SvrPair {
    pub fn dim(&self) -> usize {
        self.model_x.dim()
    }

    pub fn predict(&self, onboard: &[f64]) -> Result<(f64, f64), SvrError> {
        Ok((
            self.model_x.predict(onboard)?,
            self.model_y.predict(onboard)?,
        ))
    }

    /// Per-row predictions for a feature matrix.
    pub fn predict_batch(&self, features: &Mat) -> Result<Vec<(f64, f64)>, SvrError> {
        if features.cols() != self.dim() {
            return Err(SvrError::DimensionMismatch {
                expected: self.dim(),
                found: features.cols(),
            });
        }
        let rows = features.rows();
        let out: Vec<(f64, f64)> = (0..rows)
            .into_par_iter()
            .map(|i| {
                let xn = apply_norm_vec(features.row(i), &self.model_x.norm)
                    .expect("dimension checked above");
                (
                    self.model_x.predict_normalized(&xn),
                    self.model_y.predict_normalized(&xn),
                )
            })
            .collect();
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub kernel: KernelSpec,
    pub c: f64,
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: u64,
    /// Materialize the full Gram matrix up to this many rows.
    pub full_gram_limit: usize,
    /// Row capacity of the LRU fallback cache.
    pub lru_rows: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            kernel: KernelSpec::rbf_default(crate::telemetry::CHANNELS),
            c: 10.0,
            epsilon: 1.0,
            tol: 1e-3,
            max_iter: 1_000_000,
            full_gram_limit: 16_384,
            lru_rows: 1024,
        }
    }
}

/// Full dual coefficient vectors and iteration counts from training,
/// for audits and diagnostics.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub beta_x: Vec<f64>,
    pub beta_y: Vec<f64>,
    pub iterations_x: u64,
    pub iterations_y: u64,
}

fn validate_options(opts: &TrainOptions) -> Result<(), SvrError> {
    if !(opts.c > 0.0) {
        return Err(SvrError::InvalidParameter("C must be positive".into()));
    }
    if !(opts.epsilon >= 0.0) {
        return Err(SvrError::InvalidParameter(
            "epsilon must be non-negative".into(),
        ));
    }
    if !(opts.tol > 0.0) {
        return Err(SvrError::InvalidParameter("tol must be positive".into()));
    }
    if let KernelSpec::Rbf { gamma } = opts.kernel {
        if !(gamma > 0.0) {
            return Err(SvrError::InvalidParameter("gamma must be positive".into()));
        }
    }
    Ok(())
}

/// Trains the two axis models; see [`train_with_report`] for diagnostics.
pub fn train(
    dataset: &RegressionDataset,
    kernel: KernelSpec,
    c: f64,
    epsilon: f64,
    tol: f64,
) -> Result<SvrPair, SvrError> {
    let opts = TrainOptions {
        kernel,
        c,
        epsilon,
        tol,
        ..TrainOptions::default()
    };
    train_with_report(dataset, &opts).map(|(pair, _)| pair)
}

/// Trains both axes on the dataset, returning the models plus the full
/// coefficient vectors for KKT auditing.
///
/// The two axis solves share the Gram matrix and run as independent tasks.
pub fn train_with_report(
    dataset: &RegressionDataset,
    opts: &TrainOptions,
) -> Result<(SvrPair, TrainReport), SvrError> {
    validate_options(opts)?;
    let n = dataset.len();
    if n < 2 {
        return Err(SvrError::InsufficientData {
            needed: 2,
            found: n,
        });
    }

    let stats = fit_norm(&dataset.features).map_err(|_| SvrError::InsufficientData {
        needed: 2,
        found: n,
    })?;
    let xn = apply_norm(&dataset.features, &stats).expect("stats fit on this matrix");

    let params = SmoParams {
        c: opts.c,
        epsilon: opts.epsilon,
        tol: opts.tol,
        max_iter: opts.max_iter,
    };

    let (sol_x, sol_y) = if n <= opts.full_gram_limit {
        let gram = Arc::new(FullGram::build(opts.kernel, &xn));
        let (gx, gy) = (Arc::clone(&gram), gram);
        join(
            move || smo::solve(&dataset.target_x, &mut Gram::Full(gx), &params),
            move || smo::solve(&dataset.target_y, &mut Gram::Full(gy), &params),
        )
    } else {
        let (kernel, cap) = (opts.kernel, opts.lru_rows);
        let (xa, xb) = (xn.clone(), xn.clone());
        join(
            move || {
                smo::solve(
                    &dataset.target_x,
                    &mut Gram::Lru(LruGram::new(kernel, xa, cap)),
                    &params,
                )
            },
            move || {
                smo::solve(
                    &dataset.target_y,
                    &mut Gram::Lru(LruGram::new(kernel, xb, cap)),
                    &params,
                )
            },
        )
    };
    let sol_x = sol_x?;
    let sol_y = sol_y?;

    let build = |sol: &SmoSolution| -> SvrModel {
        let mut support_vectors = Mat::zeros(0, xn.cols());
        let mut dual_coeffs = Vec::new();
        for (i, beta) in sol.beta.iter().enumerate() {
            if beta.abs() > SUPPORT_CUTOFF {
                support_vectors.push_row(xn.row(i));
                dual_coeffs.push(*beta);
            }
        }
        SvrModel {
            kernel: opts.kernel,
            support_vectors,
            dual_coeffs,
            bias: sol.bias,
            norm: stats.clone(),
            c: opts.c,
            epsilon: opts.epsilon,
        }
    };

    let pair = SvrPair {
        model_x: build(&sol_x),
        model_y: build(&sol_y),
    };
    let report = TrainReport {
        beta_x: sol_x.beta,
        beta_y: sol_y.beta,
        iterations_x: sol_x.iterations,
        iterations_y: sol_y.iterations,
    };
    Ok((pair, report))
}

/// Result of the independent full-scan KKT check.
#[derive(Debug, Clone, Copy)]
pub struct KktAudit {
    /// Worst violation of any point's bias interval, 0 when clean.
    pub max_violation: f64,
    pub checked: usize,
}

/// Re-derives the KKT residual of a trained model over the full training set.
///
/// Kernel sums are recomputed from the raw features and the claimed
/// coefficient vector; nothing from the solver's internal state is reused.
pub fn audit_kkt(
    model: &SvrModel,
    features_raw: &Mat,
    targets: &[f64],
    beta: &[f64],
) -> Result<KktAudit, SvrError> {
    let n = features_raw.rows();
    if features_raw.cols() != model.dim() {
        return Err(SvrError::DimensionMismatch {
            expected: model.dim(),
            found: features_raw.cols(),
        });
    }
    if targets.len() != n || beta.len() != n {
        return Err(SvrError::DimensionMismatch {
            expected: n,
            found: targets.len().min(beta.len()),
        });
    }

    let xn = apply_norm(features_raw, &model.norm).map_err(|_| SvrError::DimensionMismatch {
        expected: model.dim(),
        found: features_raw.cols(),
    })?;
    let active: Vec<usize> = (0..n).filter(|&j| beta[j] != 0.0).collect();
    let xn = &xn;
    let active = &active;

    let violations: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = xn.row(i);
            let mut phi = 0.0;
            for &j in active {
                phi += beta[j] * model.kernel.eval(xn.row(j), xi);
            }
            let g = phi - targets[i];
            let (lo, hi) = smo::kkt_interval(beta[i], g, model.epsilon, model.c);
            (lo - model.bias).max(model.bias - hi).max(0.0)
        })
        .collect();

    let max_violation = violations.iter().fold(0.0f64, |a, &b| a.max(b));
    Ok(KktAudit {
        max_violation,
        checked: n,
    })
}
