//! Kernel functions and Gram-row caching for the SMO solver.

use std::collections::HashMap;
use std::sync::Arc;

use crate::mat::{dot, sq_dist, Mat};
use crate::parallel::*;

/// Kernel choices for the regressors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
}

impl KernelSpec {
    /// RBF with the usual `1 / feature_dim` bandwidth in normalized space.
    pub fn rbf_default(dim: usize) -> Self {
        KernelSpec::Rbf {
            gamma: 1.0 / dim as f64,
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            KernelSpec::Linear => dot(a, b),
            KernelSpec::Rbf { gamma } => (-gamma * sq_dist(a, b)).exp(),
        }
    }

    pub fn self_eval(&self, a: &[f64]) -> f64 {
        match self {
            KernelSpec::Linear => dot(a, a),
            KernelSpec::Rbf { .. } => 1.0,
        }
    }
}

fn kernel_row(kernel: KernelSpec, x: &Mat, i: usize) -> Arc<[f64]> {
    let xi = x.row(i);
    let row: Vec<f64> = (0..x.rows()).map(|j| kernel.eval(xi, x.row(j))).collect();
    row.into()
}

/// Fully materialized Gram matrix, one shared allocation per row.
///
/// Rows are computed independently, so the parallel build is bit-identical
/// to the sequential one.
pub struct FullGram {
    rows: Vec<Arc<[f64]>>,
}

impl FullGram {
    pub fn build(kernel: KernelSpec, x: &Mat) -> FullGram {
        let n = x.rows();
        let rows: Vec<Arc<[f64]>> = (0..n)
            .into_par_iter()
            .map(|i| kernel_row(kernel, x, i))
            .collect();
        FullGram { rows }
    }

    pub fn row(&self, i: usize) -> Arc<[f64]> {
        Arc::clone(&self.rows[i])
    }
}

/// Least-recently-used row cache for problems too big to materialize.
pub struct LruGram {
    kernel: KernelSpec,
    x: Mat,
    cap: usize,
    clock: u64,
    rows: HashMap<usize, (u64, Arc<[f64]>)>,
}

impl LruGram {
    pub fn new(kernel: KernelSpec, x: Mat, cap: usize) -> LruGram {
        LruGram {
            kernel,
            x,
            cap: cap.max(2),
            clock: 0,
            rows: HashMap::new(),
        }
    }

    pub fn row(&mut self, i: usize) -> Arc<[f64]> {
        self.clock += 1;
        let clock = self.clock;
        if let Some((stamp, row)) = self.rows.get_mut(&i) {
            *stamp = clock;
            return Arc::clone(row);
        }
        if self.rows.len() >= self.cap {
            // evict the stalest row; the map stays small, a scan is fine
            let oldest = self
                .rows
                .iter()
                .min_by_key(|(idx, (stamp, _))| (*stamp, **idx))
                .map(|(idx, _)| *idx)
                .expect("cache is non-empty");
            self.rows.remove(&oldest);
        }
        let row = kernel_row(self.kernel, &self.x, i);
        self.rows.insert(i, (clock, Arc::clone(&row)));
        row
    }
}

/// Row source handed to the solver: shared dense matrix or private LRU cache.
pub enum Gram {
    Full(Arc<FullGram>),
    Lru(LruGram),
}

impl Gram {
    pub fn row(&mut self, i: usize) -> Arc<[f64]> {
        match self {
            Gram::Full(g) => g.row(i),
            Gram::Lru(g) => g.row(i),
        }
    }
}
