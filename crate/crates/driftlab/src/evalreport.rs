//! Drift-prediction evaluation: per-axis RMSE against the zero-drift null
//! baseline, the skill score `1 − rmse/null_rmse`, and trajectories from
//! trapezoidal integration of actual and predicted velocities.

use std::io::Write;

use thiserror::Error;

use crate::svr::SvrPair;
use crate::telemetry::RegressionDataset;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: model expects {expected}, dataset has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("the test dataset is empty")]
    EmptyDataset,
    #[error("split needs at least {needed} runs, found {found}")]
    InsufficientRuns { needed: usize, found: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A point on an integrated trajectory.
pub type TrajPoint = (f64, f64, f64); // time, px, py

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rmse_x: f64,
    pub rmse_y: f64,
    /// RMSE of always predicting zero drift.
    pub null_rmse_x: f64,
    pub null_rmse_y: f64,
    /// `1 − rmse / null_rmse`; 0 by convention when the null RMSE is 0.
    pub skill_x: f64,
    pub skill_y: f64,
    pub integrated_actual: Vec<TrajPoint>,
    pub integrated_predicted: Vec<TrajPoint>,
}

impl EvalReport {
    /// Key-value text form used by the CLI and report files.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<(), EvalError> {
        writeln!(w, "rmse_x {}", self.rmse_x)?;
        writeln!(w, "rmse_y {}", self.rmse_y)?;
        writeln!(w, "null_rmse_x {}", self.null_rmse_x)?;
        writeln!(w, "null_rmse_y {}", self.null_rmse_y)?;
        writeln!(w, "skill_x {}", self.skill_x)?;
        writeln!(w, "skill_y {}", self.skill_y)?;
        let end_a = self.integrated_actual.last().unwrap_or(&(0.0, 0.0, 0.0));
        let end_p = self.integrated_predicted.last().unwrap_or(&(0.0, 0.0, 0.0));
        writeln!(w, "integrated_actual_end {} {}", end_a.1, end_a.2)?;
        writeln!(w, "integrated_predicted_end {} {}", end_p.1, end_p.2)?;
        Ok(())
    }

    /// Trajectory polyline as a `time, px, py` CSV.
    pub fn write_curve_csv<W: Write>(curve: &[TrajPoint], mut w: W) -> Result<(), EvalError> {
        writeln!(w, "time,px,py")?;
        for (t, x, y) in curve {
            writeln!(w, "{t},{x},{y}")?;
        }
        Ok(())
    }
}

fn rmse(pred: impl Iterator<Item = f64>, truth: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, y) in pred.zip(truth) {
        let d = p - y;
        sum += d * d;
        n += 1;
    }
    (sum / n as f64).sqrt()
}

fn skill(rmse: f64, null: f64) -> f64 {
    if null == 0.0 {
        0.0
    } else {
        1.0 - rmse / null
    }
}

/// Trapezoidal integration of per-axis velocities from the origin.
/// Non-increasing time gaps (e.g. concatenated runs) contribute nothing.
fn integrate(times: &[f64], vx: &[f64], vy: &[f64]) -> Vec<TrajPoint> {
    let mut out = Vec::with_capacity(times.len());
    let mut px = 0.0;
    let mut py = 0.0;
    for i in 0..times.len() {
        if i > 0 {
            let dt = (times[i] - times[i - 1]).max(0.0);
            px += 0.5 * (vx[i] + vx[i - 1]) * dt;
            py += 0.5 * (vy[i] + vy[i - 1]) * dt;
        }
        out.push((times[i], px, py));
    }
    out
}

/// Evaluates a trained pair on a held-out dataset.
pub fn evaluate(pair: &SvrPair, test: &RegressionDataset) -> Result<EvalReport, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    if test.features.cols() != pair.dim() {
        return Err(EvalError::DimensionMismatch {
            expected: pair.dim(),
            found: test.features.cols(),
        });
    }
    let preds = pair
        .predict_batch(&test.features)
        .map_err(|_| EvalError::DimensionMismatch {
            expected: pair.dim(),
            found: test.features.cols(),
        })?;
    let pred_x: Vec<f64> = preds.iter().map(|p| p.0).collect();
    let pred_y: Vec<f64> = preds.iter().map(|p| p.1).collect();

    let rmse_x = rmse(pred_x.iter().copied(), &test.target_x);
    let rmse_y = rmse(pred_y.iter().copied(), &test.target_y);
    let null_rmse_x = rmse(std::iter::repeat(0.0), &test.target_x);
    let null_rmse_y = rmse(std::iter::repeat(0.0), &test.target_y);

    Ok(EvalReport {
        rmse_x,
        rmse_y,
        null_rmse_x,
        null_rmse_y,
        skill_x: skill(rmse_x, null_rmse_x),
        skill_y: skill(rmse_y, null_rmse_y),
        integrated_actual: integrate(&test.times, &test.target_x, &test.target_y),
        integrated_predicted: integrate(&test.times, &pred_x, &pred_y),
    })
}

/// How to carve train and test sets out of a list of runs.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitPolicy {
    /// Hold out whole runs by 0-based index — the capture-session protocol.
    ByRun { holdout: Vec<usize> },
    /// Hold out a contiguous tail fraction of every run; no shuffling, so
    /// no time-series leakage.
    ByFraction(f64),
}

/// Splits runs into concatenated train and test datasets.
pub fn train_test_split(
    runs: &[RegressionDataset],
    policy: &SplitPolicy,
) -> Result<(RegressionDataset, RegressionDataset), EvalError> {
    match policy {
        SplitPolicy::ByRun { holdout } => {
            if runs.len() < 2 {
                return Err(EvalError::InsufficientRuns {
                    needed: 2,
                    found: runs.len(),
                });
            }
            if holdout.is_empty() {
                return Err(EvalError::InvalidSplit("no holdout runs given".into()));
            }
            if let Some(bad) = holdout.iter().find(|i| **i >= runs.len()) {
                return Err(EvalError::InvalidSplit(format!(
                    "holdout run {bad} out of range ({} runs)",
                    runs.len()
                )));
            }
            if holdout.len() == runs.len() {
                return Err(EvalError::InvalidSplit(
                    "cannot hold out every run".into(),
                ));
            }
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (i, run) in runs.iter().enumerate() {
                if holdout.contains(&i) {
                    test.push(run.clone());
                } else {
                    train.push(run.clone());
                }
            }
            Ok((
                RegressionDataset::concat(&train),
                RegressionDataset::concat(&test),
            ))
        }
        SplitPolicy::ByFraction(f) => {
            if !(*f > 0.0 && *f < 1.0) {
                return Err(EvalError::InvalidSplit(format!(
                    "fraction {f} must lie in (0, 1)"
                )));
            }
            if runs.is_empty() {
                return Err(EvalError::InsufficientRuns {
                    needed: 1,
                    found: 0,
                });
            }
            let mut train = Vec::new();
            let mut test = Vec::new();
            for run in runs {
                let n = run.len();
                let n_test = ((n as f64 * f).round() as usize).clamp(1, n.saturating_sub(1));
                let cut = n - n_test;
                let slice = |lo: usize, hi: usize| -> RegressionDataset {
                    let mut features = crate::mat::Mat::zeros(0, run.features.cols());
                    for i in lo..hi {
                        features.push_row(run.features.row(i));
                    }
                    RegressionDataset {
                        features,
                        target_x: run.target_x[lo..hi].to_vec(),
                        target_y: run.target_y[lo..hi].to_vec(),
                        times: run.times[lo..hi].to_vec(),
                        norm: None,
                    }
                };
                train.push(slice(0, cut));
                test.push(slice(cut, n));
            }
            Ok((
                RegressionDataset::concat(&train),
                RegressionDataset::concat(&test),
            ))
        }
    }
}
