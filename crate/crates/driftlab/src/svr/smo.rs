//! Sequential minimal optimization for the ε-insensitive regression dual.
//!
//! The problem is solved in the condensed coefficients `β = α − α*`:
//!
//! minimize `½ βᵀKβ − yᵀβ + ε·Σ|βᵢ|` subject to `Σβᵢ = 0`, `|βᵢ| ≤ C`.
//!
//! Each step picks the maximal KKT-violating pair (the point demanding the
//! largest bias from below and the point demanding the smallest from above,
//! lowest index on ties), then minimizes the one-dimensional piecewise
//! quadratic along `β_up += δ, β_dn -= δ` exactly. Pairwise transfer keeps
//! the equality constraint intact; landing on a box corner or a sign change
//! snaps the coefficient to the exact bound value.

use std::sync::Arc;

use super::kernel::Gram;
use super::SvrError;

#[derive(Debug, Clone, Copy)]
pub struct SmoParams {
    pub c: f64,
    pub epsilon: f64,
    /// KKT tolerance: solve until the worst violation is below this.
    pub tol: f64,
    pub max_iter: u64,
}

impl Default for SmoParams {
    fn default() -> Self {
        SmoParams {
            c: 10.0,
            epsilon: 1.0,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SmoSolution {
    /// Dual coefficients for every training point (zeros included).
    pub beta: Vec<f64>,
    pub bias: f64,
    pub iterations: u64,
}

/// Allowed bias interval implied by one point's coefficient and gradient.
///
/// `lo` is defined when `β < C` (the point tolerates increasing β),
/// `hi` when `β > -C`.
fn bias_interval(beta: f64, g: f64, eps: f64, c: f64) -> (Option<f64>, Option<f64>) {
    let lo = if beta < c {
        Some(if beta >= 0.0 { -g - eps } else { -g + eps })
    } else {
        None
    };
    let hi = if beta > -c {
        Some(if beta > 0.0 { -g - eps } else { -g + eps })
    } else {
        None
    };
    (lo, hi)
}

struct Selection {
    up: usize,
    dn: usize,
    violation: f64,
}

fn select_pair(beta: &[f64], g: &[f64], eps: f64, c: f64) -> Option<Selection> {
    let mut lo_max = f64::NEG_INFINITY;
    let mut hi_min = f64::INFINITY;
    let mut up = usize::MAX;
    let mut dn = usize::MAX;
    for i in 0..beta.len() {
        let (lo, hi) = bias_interval(beta[i], g[i], eps, c);
        if let Some(lo) = lo {
            if lo > lo_max {
                lo_max = lo;
                up = i;
            }
        }
        if let Some(hi) = hi {
            if hi < hi_min {
                hi_min = hi;
                dn = i;
            }
        }
    }
    if up == usize::MAX || dn == usize::MAX {
        return None;
    }
    Some(Selection {
        up,
        dn,
        violation: lo_max - hi_min,
    })
}

/// Outcome of the one-dimensional pair subproblem.
#[derive(Debug, Clone, Copy)]
struct PairMove {
    delta: f64,
    new_up: f64,
    new_dn: f64,
}

/// Exactly minimizes
/// `H(δ) = ½ηδ² + δ(g_up − g_dn) + ε(|β_up+δ| − |β_up|) + ε(|β_dn−δ| − |β_dn|)`
/// over `δ ∈ [0, δ_max]` by enumerating segment boundaries and the interior
/// stationary point of each segment.
fn pair_minimum(
    beta_up: f64,
    beta_dn: f64,
    g_up: f64,
    g_dn: f64,
    eta: f64,
    eps: f64,
    c: f64,
) -> PairMove {
    let room_up = c - beta_up;
    let room_dn = beta_dn + c;
    let delta_max = room_up.min(room_dn);

    let h = |delta: f64| -> f64 {
        0.5 * eta * delta * delta
            + delta * (g_up - g_dn)
            + eps * ((beta_up + delta).abs() - beta_up.abs())
            + eps * ((beta_dn - delta).abs() - beta_dn.abs())
    };

    // candidate deltas with the exact coefficient values they land on
    let mut candidates: Vec<PairMove> = Vec::with_capacity(6);
    let mut push = |delta: f64, new_up: Option<f64>, new_dn: Option<f64>| {
        if delta > 0.0 && delta <= delta_max {
            candidates.push(PairMove {
                delta,
                new_up: new_up.unwrap_or(beta_up + delta),
                new_dn: new_dn.unwrap_or(beta_dn - delta),
            });
        }
    };

    // box edge
    push(
        delta_max,
        (delta_max == room_up).then_some(c),
        (delta_max == room_dn).then_some(-c),
    );
    // sign crossings
    if beta_up < 0.0 {
        push(-beta_up, Some(0.0), None);
    }
    if beta_dn > 0.0 {
        push(beta_dn, None, Some(0.0));
    }

    if eta > 0.0 {
        // interior stationary points, one per sign segment
        let mut breaks: Vec<f64> = vec![0.0, delta_max];
        if beta_up < 0.0 && -beta_up < delta_max {
            breaks.push(-beta_up);
        }
        if beta_dn > 0.0 && beta_dn < delta_max {
            breaks.push(beta_dn);
        }
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in breaks.windows(2) {
            let (l, r) = (w[0], w[1]);
            if r <= l {
                continue;
            }
            let mid = 0.5 * (l + r);
            let s_up = if beta_up + mid >= 0.0 { 1.0 } else { -1.0 };
            let s_dn = if beta_dn - mid > 0.0 { 1.0 } else { -1.0 };
            let stationary = -((g_up - g_dn) + eps * (s_up - s_dn)) / eta;
            if stationary > l && stationary < r {
                push(stationary, None, None);
            }
        }
    }

    let mut best = PairMove {
        delta: 0.0,
        new_up: beta_up,
        new_dn: beta_dn,
    };
    let mut best_h = 0.0;
    for cand in candidates {
        let val = h(cand.delta);
        if val < best_h || (val == best_h && cand.delta < best.delta) {
            best_h = val;
            best = cand;
        }
    }
    best
}

/// Bias from the converged state: mean of the values pinned by free
/// support vectors, else the midpoint of the surviving KKT interval.
fn bias_from_state(beta: &[f64], g: &[f64], eps: f64, c: f64, lo_max: f64, hi_min: f64) -> f64 {
    let free_margin = 1e-8 * c;
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..beta.len() {
        let b = beta[i];
        if b.abs() > free_margin && b.abs() < c - free_margin {
            sum += if b > 0.0 { -g[i] - eps } else { -g[i] + eps };
            count += 1;
        }
    }
    if count > 0 {
        sum / count as f64
    } else {
        0.5 * (lo_max + hi_min)
    }
}

/// Recomputes the gradient `g = Kβ − y` from scratch over nonzero coefficients.
fn refresh_gradient(beta: &[f64], y: &[f64], gram: &mut Gram, g: &mut [f64]) {
    for (gk, yk) in g.iter_mut().zip(y) {
        *gk = -yk;
    }
    for j in 0..beta.len() {
        if beta[j] != 0.0 {
            let row = gram.row(j);
            let bj = beta[j];
            for k in 0..g.len() {
                g[k] += bj * row[k];
            }
        }
    }
}

/// Runs SMO to the requested KKT tolerance.
///
/// Convergence is declared only after a from-scratch gradient recompute
/// confirms it, so accumulated float drift in the incremental updates
/// cannot fake a solution.
pub fn solve(y: &[f64], gram: &mut Gram, params: &SmoParams) -> Result<SmoSolution, SvrError> {
    let n = y.len();
    let mut beta = vec![0.0; n];
    let mut g: Vec<f64> = y.iter().map(|v| -v).collect();
    let mut iterations: u64 = 0;
    const REFRESH_EVERY: u64 = 200_000;
    let mut next_refresh = REFRESH_EVERY;

    loop {
        let sel = match select_pair(&beta, &g, params.epsilon, params.c) {
            Some(s) => s,
            None => break, // nothing can move; the bias interval check below still runs
        };
        if sel.violation <= params.tol {
            refresh_gradient(&beta, y, gram, &mut g);
            let fresh = select_pair(&beta, &g, params.epsilon, params.c);
            match fresh {
                Some(f) if f.violation > params.tol => continue,
                _ => break,
            }
        }
        if iterations >= params.max_iter {
            return Err(SvrError::NoConvergence {
                iterations: params.max_iter,
            });
        }
        if iterations >= next_refresh {
            refresh_gradient(&beta, y, gram, &mut g);
            next_refresh += REFRESH_EVERY;
            continue;
        }

        let row_up: Arc<[f64]> = gram.row(sel.up);
        let row_dn: Arc<[f64]> = gram.row(sel.dn);
        let eta = row_up[sel.up] + row_dn[sel.dn] - 2.0 * row_up[sel.dn];
        let mv = pair_minimum(
            beta[sel.up],
            beta[sel.dn],
            g[sel.up],
            g[sel.dn],
            eta.max(0.0),
            params.epsilon,
            params.c,
        );
        iterations += 1;
        if mv.delta <= 0.0 {
            // numerically stuck pair; verify against a fresh gradient and stop
            refresh_gradient(&beta, y, gram, &mut g);
            match select_pair(&beta, &g, params.epsilon, params.c) {
                Some(f) if f.violation > params.tol => {
                    return Err(SvrError::NoConvergence { iterations })
                }
                _ => break,
            }
        }
        beta[sel.up] = mv.new_up;
        beta[sel.dn] = mv.new_dn;
        let d = mv.delta;
        for k in 0..n {
            g[k] += d * (row_up[k] - row_dn[k]);
        }
    }

    let (lo_max, hi_min) = final_bounds(&beta, &g, params.epsilon, params.c);
    let bias = bias_from_state(&beta, &g, params.epsilon, params.c, lo_max, hi_min);
    Ok(SmoSolution {
        beta,
        bias,
        iterations,
    })
}

fn final_bounds(beta: &[f64], g: &[f64], eps: f64, c: f64) -> (f64, f64) {
    let mut lo_max = f64::NEG_INFINITY;
    let mut hi_min = f64::INFINITY;
    for i in 0..beta.len() {
        let (lo, hi) = bias_interval(beta[i], g[i], eps, c);
        if let Some(lo) = lo {
            lo_max = lo_max.max(lo);
        }
        if let Some(hi) = hi {
            hi_min = hi_min.min(hi);
        }
    }
    if lo_max.is_infinite() {
        lo_max = hi_min;
    }
    if hi_min.is_infinite() {
        hi_min = lo_max;
    }
    (lo_max, hi_min)
}

/// Allowed bias interval for an audited point; exposed for the independent
/// KKT checker.
pub fn kkt_interval(beta: f64, g: f64, eps: f64, c: f64) -> (f64, f64) {
    let (lo, hi) = bias_interval(beta, g, eps, c);
    (
        lo.unwrap_or(f64::NEG_INFINITY),
        hi.unwrap_or(f64::INFINITY),
    )
}
