//! Cost matrices and linear assignment solvers.
//!
//! The Hungarian solver is the O(n^3) shortest-augmenting-path variant with
//! dual potentials, which handles rectangular matrices (rows <= columns)
//! natively. The greedy solver is the O(n^2) row-by-row
//! cheapest-available-column heuristic, and the brute-force solver enumerates
//! permutations in lexicographic order as an exactness oracle for small n.

use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{loss, LossSpec};
use crate::prior::Lattice;
use crate::tensorcore::{decode_rows, DecoderParams, Tensor};

/// Row-major nonnegative cost matrix with `n_rows <= n_cols`.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    pub fn new(n_rows: usize, n_cols: usize, entries: Vec<f64>) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::Input("cost matrix must be non-empty".into()));
        }
        if n_rows > n_cols {
            return Err(Error::Input(format!(
                "cost matrix needs n_rows <= n_cols, got {n_rows} x {n_cols}"
            )));
        }
        if entries.len() != n_rows * n_cols {
            return Err(Error::shape(
                "CostMatrix::new",
                format!("{} entries", n_rows * n_cols),
                format!("{}", entries.len()),
            ));
        }
        if let Some(pos) = entries.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Numeric(format!(
                "cost matrix entry ({}, {}) is negative or non-finite",
                pos / n_cols,
                pos % n_cols
            )));
        }
        Ok(CostMatrix {
            n_rows,
            n_cols,
            entries,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.n_cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.entries[row * self.n_cols..(row + 1) * self.n_cols]
    }

    /// Scales every entry by a positive factor.
    pub fn scaled(&self, factor: f64) -> Result<CostMatrix> {
        if !(factor > 0.0) {
            return Err(Error::Input(format!(
                "scale factor must be positive, got {factor}"
            )));
        }
        CostMatrix::new(
            self.n_rows,
            self.n_cols,
            self.entries.iter().map(|v| v * factor).collect(),
        )
    }
}

/// Which solver produced an assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignMethod {
    Hungarian,
    Greedy,
    BruteForce,
}

impl AssignMethod {
    pub fn name(&self) -> &'static str {
        match self {
            AssignMethod::Hungarian => "hungarian",
            AssignMethod::Greedy => "greedy",
            AssignMethod::BruteForce => "brute_force",
        }
    }
}

/// An injective mapping from rows (data) to columns (lattice codes).
#[derive(Debug, Clone)]
pub struct Assignment {
    pub mapping: Vec<usize>,
    pub method: AssignMethod,
    pub total_cost: f64,
}

impl Assignment {
    fn from_mapping(c: &CostMatrix, mapping: Vec<usize>, method: AssignMethod) -> Assignment {
        let total_cost = mapping
            .iter()
            .enumerate()
            .map(|(i, &k)| c.get(i, k))
            .sum();
        Assignment {
            mapping,
            method,
            total_cost,
        }
    }

    pub fn is_injective(&self) -> bool {
        let mut seen = vec![false; self.mapping.len().max(self.mapping.iter().map(|&k| k + 1).max().unwrap_or(0))];
        for &k in &self.mapping {
            if seen[k] {
                return false;
            }
            seen[k] = true;
        }
        true
    }
}

/// Pairwise losses between data rows and decoded rows.
pub fn cost_matrix(data: &Tensor, decoded: &Tensor, spec: &LossSpec) -> Result<CostMatrix> {
    if data.cols() != decoded.cols() {
        return Err(Error::shape(
            "cost_matrix",
            format!("{} columns", data.cols()),
            format!("{} columns", decoded.cols()),
        ));
    }
    let n = data.rows();
    let k = decoded.rows();
    if n > k {
        return Err(Error::Input(format!(
            "cost matrix needs at least as many codes as data rows, got {n} x {k}"
        )));
    }
    let mut entries = vec![0.0; n * k];
    entries
        .par_chunks_mut(k)
        .enumerate()
        .try_for_each(|(i, row)| {
            let x = data.row(i);
            for (col, slot) in row.iter_mut().enumerate() {
                let value = loss(spec, x, decoded.row(col)).map_err(|e| {
                    Error::Numeric(format!("cost entry ({i}, {col}): {e}"))
                })?;
                *slot = value;
            }
            Ok::<(), Error>(())
        })?;
    CostMatrix::new(n, k, entries)
}

/// Builds the data-to-lattice cost matrix: entry (i, k) is the configured
/// loss between data row i and the decoded k-th lattice row. Each lattice
/// row is decoded exactly once.
pub fn build_cost_matrix(
    data: &Tensor,
    params: &DecoderParams,
    lattice: &Lattice,
    spec: &LossSpec,
) -> Result<CostMatrix> {
    if lattice.dim() != params.input_dim() {
        return Err(Error::shape(
            "build_cost_matrix",
            format!("decoder input width {}", params.input_dim()),
            format!("lattice dimension {}", lattice.dim()),
        ));
    }
    if data.cols() != params.output_dim() {
        return Err(Error::shape(
            "build_cost_matrix",
            format!("decoder output width {}", params.output_dim()),
            format!("data width {}", data.cols()),
        ));
    }
    let decoded = decode_rows(params, &lattice.points)?;
    cost_matrix(data, &decoded, spec)
}

/// Exact minimum-cost assignment by shortest augmenting paths with dual
/// potentials. Column scans run in ascending index order with strict
/// improvement, so tied instances resolve deterministically toward lower
/// column indices.
pub fn solve_hungarian(c: &CostMatrix) -> Assignment {
    let n = c.n_rows();
    let m = c.n_cols();
    // 1-based arrays; index 0 is the virtual free row/column
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut matched_row = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = c.get(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < min_slack[j] {
                    min_slack[j] = reduced;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        // unwind the augmenting path
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut mapping = vec![usize::MAX; n];
    for j in 1..=m {
        if matched_row[j] != 0 {
            mapping[matched_row[j] - 1] = j - 1;
        }
    }
    debug_assert!(mapping.iter().all(|&k| k != usize::MAX));
    Assignment::from_mapping(c, mapping, AssignMethod::Hungarian)
}

/// Row-by-row greedy assignment: each row takes the cheapest still-unassigned
/// column, ties to the lowest column index. O(n^2); upper-bounds the optimum.
pub fn solve_greedy(c: &CostMatrix) -> Assignment {
    let n = c.n_rows();
    let m = c.n_cols();
    let mut taken = vec![false; m];
    let mut mapping = Vec::with_capacity(n);
    for i in 0..n {
        let row = c.row(i);
        let mut best = f64::INFINITY;
        let mut best_col = usize::MAX;
        for (j, (&cost, &is_taken)) in row.iter().zip(taken.iter()).enumerate() {
            if !is_taken && cost < best {
                best = cost;
                best_col = j;
            }
        }
        taken[best_col] = true;
        mapping.push(best_col);
    }
    Assignment::from_mapping(c, mapping, AssignMethod::Greedy)
}

/// Maximum size accepted by [`solve_brute_force`].
pub const BRUTE_FORCE_MAX: usize = 9;

/// Exhaustive minimum over all permutations, enumerated in lexicographic
/// order with strict improvement so ties resolve to the lexicographically
/// smallest mapping. Square matrices with n <= 9 only.
pub fn solve_brute_force(c: &CostMatrix) -> Result<Assignment> {
    let n = c.n_rows();
    if n != c.n_cols() {
        return Err(Error::Input(format!(
            "brute force requires a square matrix, got {n} x {}",
            c.n_cols()
        )));
    }
    if n > BRUTE_FORCE_MAX {
        return Err(Error::Capacity(format!(
            "brute force supports n <= {BRUTE_FORCE_MAX}, got {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best_cost = f64::INFINITY;
    let mut best: Vec<usize> = perm.clone();
    loop {
        let cost: f64 = perm.iter().enumerate().map(|(i, &k)| c.get(i, k)).sum();
        if cost < best_cost {
            best_cost = cost;
            best = perm.clone();
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(Assignment::from_mapping(c, best, AssignMethod::BruteForce))
}

/// Advances to the next lexicographic permutation; false after the last one.
fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// Which solvers a benchmark run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMethod {
    Hungarian,
    Greedy,
    Both,
}

/// Wall-time statistics for one solver at one problem size.
#[derive(Debug, Clone)]
pub struct BenchEntry {
    pub method: AssignMethod,
    pub n: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
}

/// Times the solvers on seeded random cost matrices (uniform entries).
pub fn bench_assign(
    n: usize,
    method: BenchMethod,
    repeats: usize,
    seed: u64,
) -> Result<Vec<BenchEntry>> {
    if n < 2 {
        return Err(Error::Input(format!("bench needs n >= 2, got {n}")));
    }
    if repeats == 0 {
        return Err(Error::Input("bench needs repeats >= 1".into()));
    }
    let matrices: Vec<CostMatrix> = (0..repeats)
        .map(|rep| random_cost_matrix(n, seed.wrapping_add(rep as u64)))
        .collect::<Result<_>>()?;

    let mut entries = Vec::new();
    if matches!(method, BenchMethod::Hungarian | BenchMethod::Both) {
        entries.push(time_solver(&matrices, AssignMethod::Hungarian, n));
    }
    if matches!(method, BenchMethod::Greedy | BenchMethod::Both) {
        entries.push(time_solver(&matrices, AssignMethod::Greedy, n));
    }
    Ok(entries)
}

/// Seeded random square matrix with uniform [0, 1) entries.
pub fn random_cost_matrix(n: usize, seed: u64) -> Result<CostMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries: Vec<f64> = (0..n * n).map(|_| rng.gen::<f64>()).collect();
    CostMatrix::new(n, n, entries)
}

fn time_solver(matrices: &[CostMatrix], method: AssignMethod, n: usize) -> BenchEntry {
    let mut times_ms = Vec::with_capacity(matrices.len());
    for m in matrices {
        let start = Instant::now();
        let assignment = match method {
            AssignMethod::Hungarian => solve_hungarian(m),
            AssignMethod::Greedy => solve_greedy(m),
            AssignMethod::BruteForce => unreachable!("brute force is not benchmarked"),
        };
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        std::hint::black_box(assignment.total_cost);
        times_ms.push(elapsed);
    }
    let mean = times_ms.iter().sum::<f64>() / times_ms.len() as f64;
    let var = times_ms
        .iter()
        .map(|t| (t - mean) * (t - mean))
        .sum::<f64>()
        / times_ms.len() as f64;
    BenchEntry {
        method,
        n,
        mean_ms: mean,
        std_ms: var.sqrt(),
    }
}
