//! Independent reference implementations used only by the test suites.
//!
//! Nothing here touches the library's solver or SVD internals: the QP
//! reference works on the expanded two-block formulation with projected
//! gradient ascent, and the eigenvalue reference uses power iteration
//! with deflation. Agreement between these and the production paths is
//! the point of the tests that include this module.

#![allow(dead_code)] // each test target uses a subset

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RefKernel {
    Linear,
    Rbf(f64),
}

impl RefKernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            RefKernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            RefKernel::Rbf(gamma) => {
                let d2: f64 = a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| {
                        let d = x - y;
                        d * d
                    })
                    .sum();
                (-gamma * d2).exp()
            }
        }
    }
}

/// Population z-scoring, constant columns pinned to zero output.
pub fn ref_normalize(rows: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    let mut std = vec![0.0; d];
    for j in 0..d {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        if col.iter().all(|v| *v == col[0]) {
            mean[j] = col[0];
            std[j] = 0.0;
            continue;
        }
        let m = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        mean[j] = m;
        std[j] = var.sqrt();
    }
    let normed = rows
        .iter()
        .map(|r| {
            (0..d)
                .map(|j| {
                    if std[j] == 0.0 {
                        0.0
                    } else {
                        (r[j] - mean[j]) / std[j]
                    }
                })
                .collect()
        })
        .collect();
    (normed, mean, std)
}

pub fn ref_normalize_vec(x: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(j, v)| if std[j] == 0.0 { 0.0 } else { (v - mean[j]) / std[j] })
        .collect()
}

pub fn ref_gram(kernel: RefKernel, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    (0..n)
        .map(|i| (0..n).map(|j| kernel.eval(&rows[i], &rows[j])).collect())
        .collect()
}

/// Condensed dual objective `−½βᵀKβ + yᵀβ − ε·Σ|β|`, the quantity both
/// solvers are maximizing.
pub fn ref_dual_objective(k: &[Vec<f64>], y: &[f64], eps: f64, beta: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if beta[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += beta[i] * k[i][j] * beta[j];
        }
    }
    let linear: f64 = y.iter().zip(beta).map(|(a, b)| a * b).sum();
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    -0.5 * quad + linear - eps * l1
}

#[derive(Debug, Clone)]
pub struct RefSolution {
    pub beta: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
    pub iterations: usize,
}

/// Safe overestimate of the largest eigenvalue of a symmetric PSD matrix:
/// the Frobenius norm. A loose bound only slows the ascent down.
fn psd_lambda_bound(k: &[Vec<f64>]) -> f64 {
    k.iter()
        .flat_map(|row| row.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Projects `(a, s)` onto `{0 ≤ · ≤ C} ∩ {Σa − Σs = 0}` by bisecting the
/// shift λ applied as `a − λ`, `s + λ` (the balance is monotone in λ).
fn project_pair(a: &[f64], s: &[f64], c: f64) -> (Vec<f64>, Vec<f64>) {
    let balance = |lam: f64| -> f64 {
        let pa: f64 = a.iter().map(|v| (v - lam).clamp(0.0, c)).sum();
        let ps: f64 = s.iter().map(|v| (v + lam).clamp(0.0, c)).sum();
        pa - ps
    };

    let bound = a
        .iter()
        .chain(s.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        + c
        + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..120 {
        let mid = 0.5 * (lo + hi);
        if balance(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lam = 0.5 * (lo + hi);
    let pa = a.iter().map(|v| (v - lam).clamp(0.0, c)).collect();
    let ps = s.iter().map(|v| (v + lam).clamp(0.0, c)).collect();
    (pa, ps)
}

/// Projected-gradient ascent (with momentum and restart) on the expanded
/// dual: variables `(α, α*) ∈ [0, C]^{2N}`, constraint `Σα = Σα*`,
/// objective `−½(α−α*)ᵀK(α−α*) + yᵀ(α−α*) − ε·Σ(α+α*)`.
pub fn ref_solve_dual(k: &[Vec<f64>], y: &[f64], c: f64, eps: f64) -> RefSolution {
    let n = y.len();
    let lambda_bound = psd_lambda_bound(k).max(1e-12);
    let step = 1.0 / (2.0 * lambda_bound);

    let objective_z = |alpha: &[f64], star: &[f64]| -> f64 {
        let beta: Vec<f64> = alpha.iter().zip(star).map(|(a, s)| a - s).collect();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += beta[i] * k[i][j] * beta[j];
            }
        }
        let linear: f64 = y.iter().zip(&beta).map(|(yy, b)| yy * b).sum();
        let sum: f64 = alpha.iter().chain(star.iter()).sum();
        -0.5 * quad + linear - eps * sum
    };

    let mut alpha = vec![0.0; n];
    let mut star = vec![0.0; n];
    let mut alpha_prev = alpha.clone();
    let mut star_prev = star.clone();
    let mut best_alpha = alpha.clone();
    let mut best_star = star.clone();
    let mut best_obj = objective_z(&alpha, &star);
    let mut theta = 1.0f64;
    let mut stalled = 0usize;
    let max_iter = 200_000;
    let mut iterations = 0;

    for it in 0..max_iter {
        iterations = it + 1;
        // momentum extrapolation
        let th_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let mix = (theta - 1.0) / th_next;
        let wa: Vec<f64> = alpha
            .iter()
            .zip(&alpha_prev)
            .map(|(z, p)| z + mix * (z - p))
            .collect();
        let ws: Vec<f64> = star
            .iter()
            .zip(&star_prev)
            .map(|(z, p)| z + mix * (z - p))
            .collect();
        theta = th_next;

        // gradient at the extrapolated point
        let beta: Vec<f64> = wa.iter().zip(&ws).map(|(a, s)| a - s).collect();
        let mut kbeta = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                kbeta[i] += k[i][j] * beta[j];
            }
        }
        let ga: Vec<f64> = (0..n).map(|i| wa[i] + step * (-kbeta[i] + y[i] - eps)).collect();
        let gs: Vec<f64> = (0..n).map(|i| ws[i] + step * (kbeta[i] - y[i] - eps)).collect();
        let (na, ns) = project_pair(&ga, &gs, c);

        let obj = objective_z(&na, &ns);
        if obj < best_obj {
            // non-monotone momentum step: restart from the best point
            theta = 1.0;
            alpha_prev = best_alpha.clone();
            star_prev = best_star.clone();
            alpha = best_alpha.clone();
            star = best_star.clone();
            stalled += 1;
        } else {
            if obj > best_obj + 1e-15 * (1.0 + best_obj.abs()) {
                stalled = 0;
            } else {
                stalled += 1;
            }
            best_obj = obj;
            best_alpha = na.clone();
            best_star = ns.clone();
            alpha_prev = std::mem::replace(&mut alpha, na);
            star_prev = std::mem::replace(&mut star, ns);
        }

        if stalled > 8000 {
            break;
        }
    }

    let beta: Vec<f64> = best_alpha.iter().zip(&best_star).map(|(a, s)| a - s).collect();

    // bias from the surviving KKT interval of the reference solution
    let mut kbeta = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            kbeta[i] += k[i][j] * beta[j];
        }
    }
    let mut lo_max = f64::NEG_INFINITY;
    let mut hi_min = f64::INFINITY;
    let edge = 1e-9 * c;
    for i in 0..n {
        let g = kbeta[i] - y[i];
        let b = beta[i];
        if b < c - edge {
            let lo = if b >= 0.0 { -g - eps } else { -g + eps };
            lo_max = lo_max.max(lo);
        }
        if b > -c + edge {
            let hi = if b > 0.0 { -g - eps } else { -g + eps };
            hi_min = hi_min.min(hi);
        }
    }
    let bias = if lo_max.is_finite() && hi_min.is_finite() {
        0.5 * (lo_max + hi_min)
    } else if lo_max.is_finite() {
        lo_max
    } else {
        hi_min
    };

    RefSolution {
        objective: ref_dual_objective(k, y, eps, &beta),
        beta,
        bias,
        iterations,
    }
}

/// Reference prediction with the reference solution, all in raw space.
pub fn ref_predict(
    kernel: RefKernel,
    train_norm: &[Vec<f64>],
    beta: &[f64],
    bias: f64,
    mean: &[f64],
    std: &[f64],
    x_raw: &[f64],
) -> f64 {
    let xn = ref_normalize_vec(x_raw, mean, std);
    let mut f = bias;
    for (row, b) in train_norm.iter().zip(beta) {
        if *b != 0.0 {
            f += b * kernel.eval(row, &xn);
        }
    }
    f
}

/// Eigenvalues of a symmetric PSD matrix, descending, by power iteration
/// with deflation and re-orthogonalization against found vectors.
pub fn ref_psd_eigenvalues(mut b: Vec<Vec<f64>>, seed: u64) -> Vec<f64> {
    let d = b.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found: Vec<(f64, Vec<f64>)> = Vec::new();

    for _ in 0..d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut lambda = 0.0;
        for _ in 0..50_000 {
            // multiply
            let mut w = vec![0.0; d];
            for i in 0..d {
                for j in 0..d {
                    w[i] += b[i][j] * v[j];
                }
            }
            // re-orthogonalize against converged directions
            for (_, u) in &found {
                let dot: f64 = w.iter().zip(u).map(|(a, c)| a * c).sum();
                for i in 0..d {
                    w[i] -= dot * u[i];
                }
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-300 {
                lambda = 0.0;
                break;
            }
            for i in 0..d {
                w[i] /= norm;
            }
            let diff: f64 = w
                .iter()
                .zip(&v)
                .map(|(a, c)| (a - c).abs())
                .fold(0.0, f64::max);
            v = w;
            lambda = norm;
            if diff < 1e-15 {
                break;
            }
        }
        // deflate
        for i in 0..d {
            for j in 0..d {
                b[i][j] -= lambda * v[i] * v[j];
            }
        }
        found.push((lambda, v));
    }

    let mut eigs: Vec<f64> = found.into_iter().map(|(l, _)| l.max(0.0)).collect();
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    eigs
}

/// `AᵀA` for a row-major matrix given as slices of rows.
pub fn gram_transpose(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = rows[0].len();
    let mut b = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                b[i][j] += r[i] * r[j];
            }
        }
    }
    b
}

/// Deterministic random test matrices.
pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| (rng.random::<f64>() - 0.5) * 2.0 * scale).collect())
        .collect()
}

/// A random small regression instance for solver-vs-reference checks.
pub struct QpInstance {
    pub rows: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub kernel: driftlab::svr::KernelSpec,
    pub ref_kernel: RefKernel,
    pub c: f64,
    pub eps: f64,
}

pub fn random_qp_instance(seed: u64) -> QpInstance {
    use driftlab::svr::KernelSpec;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 4 + (rng.random::<f64>() * 17.0) as usize; // 4..=20
    let d = 1 + (rng.random::<f64>() * 5.0) as usize; // 1..=5
    let rows = random_rows(&mut rng, n, d, 2.0);
    let w: Vec<f64> = (0..d).map(|_| (rng.random::<f64>() - 0.5) * 4.0).collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| {
            let lin: f64 = r.iter().zip(&w).map(|(a, b)| a * b).sum();
            lin + (r[0] * 1.3).sin() * 2.0 + (rng.random::<f64>() - 0.5) * 0.6
        })
        .collect();
    let (kernel, ref_kernel) = if seed % 2 == 0 {
        let gamma = 0.2 + rng.random::<f64>() * 1.3;
        (KernelSpec::Rbf { gamma }, RefKernel::Rbf(gamma))
    } else {
        (KernelSpec::Linear, RefKernel::Linear)
    };
    let c = 0.5 + rng.random::<f64>() * 29.5;
    let eps = rng.random::<f64>() * 0.8;
    QpInstance {
        rows,
        y,
        kernel,
        ref_kernel,
        c,
        eps,
    }
}

/// Trains the library solver and the reference on one instance.
/// Returns (dual objective gap, worst prediction gap over 20 probes).
pub fn compare_against_reference(inst: &QpInstance, probe_seed: u64) -> (f64, f64) {
    use driftlab::mat::Mat;
    use driftlab::svr::{train_with_report, TrainOptions};
    use driftlab::telemetry::RegressionDataset;

    let ds = RegressionDataset {
        features: Mat::from_rows(&inst.rows),
        target_x: inst.y.clone(),
        target_y: inst.y.iter().map(|v| -v).collect(),
        times: (0..inst.rows.len()).map(|i| i as f64 * 0.1).collect(),
        norm: None,
    };
    let opts = TrainOptions {
        kernel: inst.kernel,
        c: inst.c,
        epsilon: inst.eps,
        tol: 1e-8,
        ..TrainOptions::default()
    };
    let (pair, report) = train_with_report(&ds, &opts).expect("training failed");

    let (normed, mean, std) = ref_normalize(&inst.rows);
    let k = ref_gram(inst.ref_kernel, &normed);
    let reference = ref_solve_dual(&k, &inst.y, inst.c, inst.eps);

    let obj_smo = ref_dual_objective(&k, &inst.y, inst.eps, &report.beta_x);
    let obj_gap = (obj_smo - reference.objective).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(probe_seed);
    let d = inst.rows[0].len();
    let mut pred_gap = 0.0f64;
    for _ in 0..20 {
        let x: Vec<f64> = (0..d).map(|_| (rng.random::<f64>() - 0.5) * 4.0).collect();
        let (lib, _) = pair.predict(&x).unwrap();
        let refp = ref_predict(
            inst.ref_kernel,
            &normed,
            &reference.beta,
            reference.bias,
            &mean,
            &std,
            &x,
        );
        pred_gap = pred_gap.max((lib - refp).abs());
    }
    (obj_gap, pred_gap)
}
