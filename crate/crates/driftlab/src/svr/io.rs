//! Versioned text serialization of trained model pairs.
//!
//! The format is line-oriented and self-describing: a shared header
//! (version, kernel, C, epsilon, D, normalization stats) followed by one
//! block per axis with bias and `coefficient + support vector` rows.
//! Floats are written with Rust's shortest round-trip formatting, so
//! `load(save(m))` predicts bit-identically to `m`.

use super::{KernelSpec, SvrError, SvrModel, SvrPair};
use crate::mat::Mat;
use crate::normdiag::NormStats;

const MAGIC: &str = "driftlab-svr v1";

fn push_floats(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&format!("{v}"));
    }
}

/// Serializes a trained pair to bytes.
pub fn save_model(pair: &SvrPair) -> Vec<u8> {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    match pair.model_x.kernel {
        KernelSpec::Linear => out.push_str("kernel linear\n"),
        KernelSpec::Rbf { gamma } => out.push_str(&format!("kernel rbf {gamma}\n")),
    }
    out.push_str(&format!("C {}\n", pair.model_x.c));
    out.push_str(&format!("epsilon {}\n", pair.model_x.epsilon));
    out.push_str(&format!("D {}\n", pair.model_x.dim()));
    out.push_str("norm_mean ");
    push_floats(&mut out, &pair.model_x.norm.mean);
    out.push('\n');
    out.push_str("norm_std ");
    push_floats(&mut out, &pair.model_x.norm.std);
    out.push('\n');

    for (tag, model) in [("x", &pair.model_x), ("y", &pair.model_y)] {
        out.push_str(&format!("axis {tag}\n"));
        out.push_str(&format!("M {}\n", model.num_support_vectors()));
        out.push_str(&format!("bias {}\n", model.bias));
        for (i, beta) in model.dual_coeffs.iter().enumerate() {
            out.push_str("sv ");
            out.push_str(&format!("{beta}"));
            let row = model.support_vectors.row(i);
            out.push(' ');
            push_floats(&mut out, row);
            out.push('\n');
        }
    }
    out.push_str("end\n");
    out.into_bytes()
}

struct Lines<'a> {
    inner: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str, SvrError> {
        self.line_no += 1;
        self.inner.next().ok_or(SvrError::CorruptPayload {
            line: self.line_no,
            reason: "unexpected end of payload".into(),
        })
    }

    fn corrupt(&self, reason: impl Into<String>) -> SvrError {
        SvrError::CorruptPayload {
            line: self.line_no,
            reason: reason.into(),
        }
    }

    fn expect_kv(&mut self, key: &str) -> Result<&'a str, SvrError> {
        let line = self.next()?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| self.corrupt(format!("expected `{key} ...`")))
    }
}

fn parse_f64(lines: &Lines<'_>, raw: &str, what: &str) -> Result<f64, SvrError> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(lines.corrupt(format!("bad {what}: `{raw}`"))),
    }
}

fn parse_floats(lines: &Lines<'_>, raw: &str, want: usize, what: &str) -> Result<Vec<f64>, SvrError> {
    let vals: Result<Vec<f64>, SvrError> = raw
        .split(' ')
        .filter(|s| !s.is_empty())
        .map(|s| parse_f64(lines, s, what))
        .collect();
    let vals = vals?;
    if vals.len() != want {
        return Err(lines.corrupt(format!("{what}: expected {want} values, found {}", vals.len())));
    }
    Ok(vals)
}

/// Deserializes a model pair, validating structure and invariants.
pub fn load_model(bytes: &[u8]) -> Result<SvrPair, SvrError> {
    let text = std::str::from_utf8(bytes).map_err(|_| SvrError::CorruptPayload {
        line: 0,
        reason: "payload is not UTF-8".into(),
    })?;
    let mut lines = Lines {
        inner: text.lines(),
        line_no: 0,
    };

    let magic = lines.next()?;
    if magic != MAGIC {
        return Err(SvrError::VersionMismatch {
            found: magic.to_string(),
        });
    }

    let kernel_line = lines.expect_kv("kernel")?;
    let kernel = match kernel_line.split(' ').collect::<Vec<_>>().as_slice() {
        ["linear"] => KernelSpec::Linear,
        ["rbf", g] => {
            let gamma = parse_f64(&lines, g, "gamma")?;
            if !(gamma > 0.0) {
                return Err(lines.corrupt("gamma must be positive"));
            }
            KernelSpec::Rbf { gamma }
        }
        _ => return Err(lines.corrupt(format!("unknown kernel `{kernel_line}`"))),
    };

    let c = {
        let raw = lines.expect_kv("C")?;
        parse_f64(&lines, raw, "C")?
    };
    if !(c > 0.0) {
        return Err(lines.corrupt("C must be positive"));
    }
    let epsilon = {
        let raw = lines.expect_kv("epsilon")?;
        parse_f64(&lines, raw, "epsilon")?
    };
    if epsilon < 0.0 {
        return Err(lines.corrupt("epsilon must be non-negative"));
    }
    let dim: usize = {
        let raw = lines.expect_kv("D")?;
        raw.parse().map_err(|_| lines.corrupt("bad D"))?
    };
    if dim == 0 {
        return Err(lines.corrupt("D must be positive"));
    }

    let mean_raw = lines.expect_kv("norm_mean")?;
    let mean = parse_floats(&lines, mean_raw, dim, "norm_mean")?;
    let std_raw = lines.expect_kv("norm_std")?;
    let std = parse_floats(&lines, std_raw, dim, "norm_std")?;
    if std.iter().any(|s| *s < 0.0) {
        return Err(lines.corrupt("norm_std entries must be non-negative"));
    }
    let norm = NormStats { mean, std };

    let mut read_axis = |tag: &str| -> Result<SvrModel, SvrError> {
        let axis_line = lines.next()?;
        if axis_line != format!("axis {tag}") {
            return Err(lines.corrupt(format!("expected `axis {tag}`, found `{axis_line}`")));
        }
        let m: usize = {
            let raw = lines.expect_kv("M")?;
            raw.parse().map_err(|_| lines.corrupt("bad M"))?
        };
        let bias = {
            let raw = lines.expect_kv("bias")?;
            parse_f64(&lines, raw, "bias")?
        };
        let mut support_vectors = Mat::zeros(0, dim);
        let mut dual_coeffs = Vec::with_capacity(m);
        for _ in 0..m {
            let raw = lines.expect_kv("sv")?;
            let vals = parse_floats(&lines, raw, dim + 1, "sv row")?;
            let beta = vals[0];
            if beta.abs() > c * (1.0 + 1e-12) {
                return Err(lines.corrupt("coefficient exceeds the box bound"));
            }
            dual_coeffs.push(beta);
            support_vectors.push_row(&vals[1..]);
        }
        Ok(SvrModel {
            kernel,
            support_vectors,
            dual_coeffs,
            bias,
            norm: norm.clone(),
            c,
            epsilon,
        })
    };

    let model_x = read_axis("x")?;
    let model_y = read_axis("y")?;

    let end = lines.next()?;
    if end != "end" {
        return Err(lines.corrupt("missing `end` marker"));
    }

    Ok(SvrPair { model_x, model_y })
}
