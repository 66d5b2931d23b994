//! Quantile-assignment training.
//!
//! Training alternates two phases. The decoder phase is plain regression of
//! the data on the current latent memory bank. The assignment phase builds
//! the data-to-lattice cost matrix from the current decoder, solves the
//! linear assignment problem, and moves every latent toward its assigned
//! lattice code by convex (momentum) mixing. The full-batch loop assigns
//! every K epochs over the complete n x n matrix; the mini-batch loop
//! assigns per batch over sampled m x m submatrices and only touches the
//! latents of the batch rows.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assign::{
    cost_matrix, build_cost_matrix, solve_greedy, solve_hungarian, AssignMethod, Assignment,
    CostMatrix,
};
use crate::error::{Error, Result};
use crate::metrics::{loss, loss_grad, LossSpec};
use crate::prior::{Lattice, PriorKind, PriorSpec};
use crate::tensorcore::{
    adamw_step, decode_rows, early_stop_update, Activation, DecoderGrads, DecoderParams,
    OptimizerConfig, OptimizerState, OutputActivation, Tensor,
};

const SEED_WEIGHTS: u64 = 0x5745_4947;
const SEED_PERM: u64 = 0x5045_524d;
const SEED_SHUFFLE: u64 = 0x5348_5546;
const SEED_SPLIT: u64 = 0x53504c49;
const SEED_KSAMPLE: u64 = 0x4b53_414d;
const EPOCH_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

/// Assignment solver selection; `Auto` uses Hungarian up to the greedy
/// threshold and greedy above it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignSolver {
    Auto,
    Hungarian,
    Greedy,
}

/// Full-batch (assignment every K epochs over all rows) or mini-batch
/// (assignment per batch over sampled lattice subsets).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    FullBatch,
    MiniBatch,
}

/// Memory-bank initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentInit {
    /// Lattice rows permuted by a seeded random permutation.
    Random,
    /// Data ranked by first principal score, aligned to the lattice sorted by
    /// its first coordinate.
    PcaSorted,
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Assignment cadence K for the full-batch loop.
    pub assignment_period: usize,
    /// Latent momentum rho in [0, 1).
    pub momentum: f64,
    pub batch_size: usize,
    pub solver: AssignSolver,
    /// Auto mode switches to greedy above this problem size.
    pub greedy_threshold: usize,
    pub loss: LossSpec,
    pub optimizer: OptimizerConfig,
    pub patience: usize,
    /// Held-out fraction monitored for early stopping (full-batch mode).
    pub validation_fraction: f64,
    pub seed: u64,
    /// Decoder regression passes per outer iteration (full-batch mode).
    pub decoder_steps_per_epoch: usize,
    pub mode: TrainMode,
    pub init: LatentInit,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    pub output_activation: OutputActivation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 100,
            assignment_period: 3,
            momentum: 0.7,
            batch_size: 64,
            solver: AssignSolver::Auto,
            greedy_threshold: 2048,
            loss: LossSpec::l2(),
            optimizer: OptimizerConfig::default(),
            patience: 25,
            validation_fraction: 0.1,
            seed: 0,
            decoder_steps_per_epoch: 1,
            mode: TrainMode::FullBatch,
            init: LatentInit::Random,
            hidden_widths: vec![256, 256],
            activation: Activation::Relu,
            output_activation: OutputActivation::Sigmoid,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must satisfy 0 <= rho < 1, got {}",
                self.momentum
            )));
        }
        if self.assignment_period == 0 {
            return Err(Error::Config("assignment period K must be >= 1".into()));
        }
        if self.mode == TrainMode::MiniBatch && self.batch_size < 2 {
            return Err(Error::Config(
                "mini-batch mode needs batch_size m >= 2".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation fraction must be in [0,1), got {}",
                self.validation_fraction
            )));
        }
        if self.decoder_steps_per_epoch == 0 {
            return Err(Error::Config("decoder_steps_per_epoch must be >= 1".into()));
        }
        self.loss.validate()?;
        self.optimizer.validate()?;
        Ok(())
    }

    fn solver_for(&self, n: usize) -> AssignMethod {
        match self.solver {
            AssignSolver::Hungarian => AssignMethod::Hungarian,
            AssignSolver::Greedy => AssignMethod::Greedy,
            AssignSolver::Auto => {
                if n <= self.greedy_threshold {
                    AssignMethod::Hungarian
                } else {
                    AssignMethod::Greedy
                }
            }
        }
    }
}

fn solve_with(method: AssignMethod, c: &CostMatrix) -> Assignment {
    match method {
        AssignMethod::Greedy => solve_greedy(c),
        _ => solve_hungarian(c),
    }
}

/// One line of the per-epoch history.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub assignment_cost: Option<f64>,
    pub assign_method: Option<AssignMethod>,
    pub epoch_ms: f64,
    pub val_loss: Option<f64>,
    pub peak_rss_kb: Option<u64>,
}

/// Mutable training state: the latent memory bank, decoder, optimizer state,
/// and bookkeeping.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub latents: Tensor,
    pub params: DecoderParams,
    pub opt: OptimizerState,
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
    pub last_assignment: Option<Assignment>,
}

/// Initializes a training state: seeded decoder weights and the latent
/// memory bank filled with permuted lattice rows.
pub fn init_state(data: &Tensor, lattice: &Lattice, config: &TrainConfig) -> Result<TrainState> {
    config.validate()?;
    let n = data.rows();
    if lattice.n() != n {
        return Err(Error::shape(
            "init_state",
            format!("lattice with {n} rows"),
            format!("{} rows", lattice.n()),
        ));
    }
    if config.mode == TrainMode::MiniBatch && n < config.batch_size {
        return Err(Error::Config(format!(
            "mini-batch mode needs n >= batch_size, got n = {n}, m = {}",
            config.batch_size
        )));
    }

    let mut dims = Vec::with_capacity(config.hidden_widths.len() + 2);
    dims.push(lattice.dim());
    dims.extend_from_slice(&config.hidden_widths);
    dims.push(data.cols());
    let params = DecoderParams::seeded(
        &dims,
        config.activation,
        config.output_activation,
        config.seed ^ SEED_WEIGHTS,
    )?;

    let order: Vec<usize> = match config.init {
        LatentInit::Random => {
            let mut perm: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SEED_PERM);
            perm.shuffle(&mut rng);
            perm
        }
        LatentInit::PcaSorted => {
            let scores = pca_first_scores(data);
            let mut data_order: Vec<usize> = (0..n).collect();
            data_order.sort_by(|&a, &b| {
                scores[a]
                    .partial_cmp(&scores[b])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            let mut lattice_order: Vec<usize> = (0..n).collect();
            lattice_order.sort_by(|&a, &b| {
                lattice.points.row(a)[0]
                    .partial_cmp(&lattice.points.row(b)[0])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            let mut assignment = vec![0usize; n];
            for r in 0..n {
                assignment[data_order[r]] = lattice_order[r];
            }
            assignment
        }
    };
    let latents = lattice.points.gather_rows(&order)?;

    let opt = OptimizerState::new(&params);
    Ok(TrainState {
        latents,
        params,
        opt,
        epoch: 0,
        history: Vec::new(),
        last_assignment: None,
    })
}

/// First principal-component scores by power iteration on the centered data.
fn pca_first_scores(data: &Tensor) -> Vec<f64> {
    let n = data.rows();
    let p = data.cols();
    let mut mean = vec![0.0; p];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(data.row(i)) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    // start along the axis of largest variance
    let mut variances = vec![0.0; p];
    for i in 0..n {
        for (j, v) in data.row(i).iter().enumerate() {
            let d = v - mean[j];
            variances[j] += d * d;
        }
    }
    let start = variances
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(j, _)| j)
        .unwrap_or(0);
    let mut v = vec![0.0; p];
    v[start] = 1.0;
    let mut scores = vec![0.0; n];
    for _ in 0..50 {
        for (i, s) in scores.iter_mut().enumerate() {
            *s = data
                .row(i)
                .iter()
                .zip(v.iter().zip(mean.iter()))
                .map(|(x, (vj, mj))| (x - mj) * vj)
                .sum();
        }
        let mut next = vec![0.0; p];
        for (i, s) in scores.iter().enumerate() {
            for (j, x) in data.row(i).iter().enumerate() {
                next[j] += (x - mean[j]) * s;
            }
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-300 {
            break;
        }
        for x in next.iter_mut() {
            *x /= norm;
        }
        v = next;
    }
    // deterministic sign: largest-magnitude coordinate positive
    let pivot = v
        .iter()
        .enumerate()
        .max_by(|a, b| {
            a.1.abs()
                .partial_cmp(&b.1.abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .map(|(j, _)| j)
        .unwrap_or(0);
    if v[pivot] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
    for (i, s) in scores.iter_mut().enumerate() {
        *s = data
            .row(i)
            .iter()
            .zip(v.iter().zip(mean.iter()))
            .map(|(x, (vj, mj))| (x - mj) * vj)
            .sum();
    }
    scores
}

/// Loss and summed gradients over a set of rows, chunked for parallelism
/// with a fixed sequential reduction order (thread-count independent).
fn batch_loss_and_grads(
    params: &DecoderParams,
    data: &Tensor,
    latents: &Tensor,
    rows: &[usize],
    spec: &LossSpec,
) -> Result<(f64, DecoderGrads)> {
    const CHUNK: usize = 16;
    let partials: Vec<Result<(f64, DecoderGrads)>> = rows
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = DecoderGrads::zeros_like(params);
            let mut loss_sum = 0.0;
            for &i in chunk {
                let z = latents.row(i);
                let prediction = params.forward(z)?;
                let (l, grad_out) = loss_grad(spec, &prediction, data.row(i))?;
                let (g, _) = params.backward(z, &grad_out)?;
                grads.add_assign(&g);
                loss_sum += l;
            }
            Ok((loss_sum, grads))
        })
        .collect();
    let mut total = DecoderGrads::zeros_like(params);
    let mut loss_sum = 0.0;
    for part in partials {
        let (l, g) = part?;
        total.add_assign(&g);
        loss_sum += l;
    }
    Ok((loss_sum, total))
}

fn decoder_step_on(
    state: &mut TrainState,
    data: &Tensor,
    rows: &[usize],
    config: &TrainConfig,
    cycle_fraction: f64,
) -> Result<f64> {
    let mut order = rows.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(
        config.seed ^ SEED_SHUFFLE ^ (state.epoch as u64).wrapping_mul(EPOCH_MIX),
    );
    let mut loss_total = 0.0;
    let mut samples = 0usize;
    for _pass in 0..config.decoder_steps_per_epoch {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let (loss_sum, mut grads) =
                batch_loss_and_grads(&state.params, data, &state.latents, batch, &config.loss)?;
            grads.scale(1.0 / batch.len() as f64);
            adamw_step(
                &mut state.params,
                &mut state.opt,
                &grads,
                &config.optimizer,
                cycle_fraction,
            )?;
            loss_total += loss_sum;
            samples += batch.len();
        }
    }
    let mean = loss_total / samples as f64;
    if !mean.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite training loss at epoch {}",
            state.epoch
        )));
    }
    Ok(mean)
}

/// One decoder regression pass over all rows: minimizes the configured loss
/// of data against the current memory bank, recording the mean loss.
pub fn decoder_step(state: &mut TrainState, data: &Tensor, config: &TrainConfig) -> Result<f64> {
    let rows: Vec<usize> = (0..data.rows()).collect();
    let fraction = config
        .optimizer
        .schedule
        .cycle_fraction(state.epoch.saturating_sub(1) as f64);
    decoder_step_on(state, data, &rows, config, fraction)
}

fn momentum_update_row(latent: &mut [f64], code: &[f64], rho: f64) {
    for (z, q) in latent.iter_mut().zip(code.iter()) {
        *z = rho * q + (1.0 - rho) * *z;
    }
}

/// Full-batch assignment: builds the n x n cost matrix, solves it with the
/// configured method, and applies the momentum update to every latent row.
pub fn assignment_step_full(
    state: &mut TrainState,
    data: &Tensor,
    lattice: &Lattice,
    config: &TrainConfig,
) -> Result<()> {
    let n = data.rows();
    if lattice.n() != n {
        return Err(Error::shape(
            "assignment_step_full",
            format!("lattice with {n} rows"),
            format!("{} rows", lattice.n()),
        ));
    }
    let cost = build_cost_matrix(data, &state.params, lattice, &config.loss)?;
    let assignment = solve_with(config.solver_for(n), &cost);
    for i in 0..n {
        momentum_update_row(
            state.latents.row_mut(i),
            lattice.points.row(assignment.mapping[i]),
            config.momentum,
        );
    }
    state.last_assignment = Some(assignment);
    Ok(())
}

fn check_indices(what: &str, indices: &[usize], limit: usize) -> Result<()> {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Input(format!("duplicate indices in {what}")));
    }
    if let Some(&max) = sorted.last() {
        if max >= limit {
            return Err(Error::Input(format!(
                "{what} index {max} out of range for {limit} rows"
            )));
        }
    }
    Ok(())
}

/// Stochastic assignment on a mini-batch: solves the |B| x |B| assignment
/// between the batch rows and the sampled lattice subset, then applies the
/// momentum update to the batch rows only. Rows outside the batch are left
/// untouched. Returns the batch-local assignment.
pub fn assignment_step_minibatch(
    state: &mut TrainState,
    data: &Tensor,
    batch: &[usize],
    lattice_subset: &[usize],
    lattice: &Lattice,
    config: &TrainConfig,
) -> Result<Assignment> {
    if batch.len() != lattice_subset.len() || batch.is_empty() {
        return Err(Error::Input(format!(
            "batch and lattice subset must have equal nonzero sizes, got {} and {}",
            batch.len(),
            lattice_subset.len()
        )));
    }
    check_indices("batch", batch, data.rows())?;
    check_indices("lattice subset", lattice_subset, lattice.n())?;

    let sub_data = data.gather_rows(batch)?;
    let codes = lattice.points.gather_rows(lattice_subset)?;
    let decoded = decode_rows(&state.params, &codes)?;
    let cost = cost_matrix(&sub_data, &decoded, &config.loss)?;
    let assignment = solve_with(config.solver_for(batch.len()), &cost);
    for (j, &row) in batch.iter().enumerate() {
        momentum_update_row(
            state.latents.row_mut(row),
            lattice.points.row(lattice_subset[assignment.mapping[j]]),
            config.momentum,
        );
    }
    Ok(assignment)
}

fn sample_without_replacement(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = i + rng.gen_range(0..n - i);
        indices.swap(i, j);
    }
    let mut chosen = indices[..count].to_vec();
    chosen.sort_unstable();
    chosen
}

fn minibatch_epoch(
    state: &mut TrainState,
    data: &Tensor,
    lattice: &Lattice,
    config: &TrainConfig,
    cycle_fraction: f64,
) -> Result<(f64, Option<f64>, Option<AssignMethod>)> {
    let n = data.rows();
    let epoch_salt = (state.epoch as u64).wrapping_mul(EPOCH_MIX);
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ SEED_SHUFFLE ^ epoch_salt);
    order.shuffle(&mut shuffle_rng);
    let mut k_rng = ChaCha8Rng::seed_from_u64(config.seed ^ SEED_KSAMPLE ^ epoch_salt);

    let mut loss_total = 0.0;
    let mut cost_total = 0.0;
    let mut batches = 0usize;
    let mut method = None;
    for batch in order.chunks(config.batch_size) {
        let (loss_sum, mut grads) =
            batch_loss_and_grads(&state.params, data, &state.latents, batch, &config.loss)?;
        grads.scale(1.0 / batch.len() as f64);
        adamw_step(
            &mut state.params,
            &mut state.opt,
            &grads,
            &config.optimizer,
            cycle_fraction,
        )?;
        loss_total += loss_sum;

        let subset = sample_without_replacement(&mut k_rng, n, batch.len());
        let assignment =
            assignment_step_minibatch(state, data, batch, &subset, lattice, config)?;
        cost_total += assignment.total_cost;
        method = Some(assignment.method);
        batches += 1;
        state.last_assignment = Some(assignment);
    }
    Ok((
        loss_total / n as f64,
        Some(cost_total / batches as f64),
        method,
    ))
}

fn mean_loss_on(
    params: &DecoderParams,
    data: &Tensor,
    latents: &Tensor,
    rows: &[usize],
    spec: &LossSpec,
) -> Result<f64> {
    const CHUNK: usize = 32;
    let partials: Vec<Result<f64>> = rows
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = 0.0;
            for &i in chunk {
                let prediction = params.forward(latents.row(i))?;
                acc += loss(spec, &prediction, data.row(i))?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = 0.0;
    for p in partials {
        total += p?;
    }
    Ok(total / rows.len() as f64)
}

/// Peak resident set size in kB (Linux VmHWM); None when unavailable.
pub fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            return rest.trim().trim_end_matches(" kB").trim().parse().ok();
        }
    }
    None
}

/// The outcome of [`fit`]: trained decoder, final memory bank, per-epoch
/// history, and the last computed assignment.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: DecoderParams,
    pub latents: Tensor,
    pub history: Vec<EpochRecord>,
    pub final_assignment: Option<Assignment>,
}

fn dump_state(state: &TrainState) -> Option<PathBuf> {
    let dir = std::env::temp_dir().join(format!(
        "nsql-dump-{}-epoch{}",
        std::process::id(),
        state.epoch
    ));
    std::fs::create_dir_all(&dir).ok()?;
    crate::tensorcore::save_decoder(&dir.join("decoder.nsql"), &state.params).ok()?;
    crate::dataio::write_tensor(&dir.join("latents.nsqt"), &state.latents).ok()?;
    Some(dir)
}

/// Runs the training loop and returns the decoder, latents, and history.
///
/// A pure function of (data, lattice, config): repeated runs with the same
/// inputs produce bitwise-identical histories (timing fields aside).
pub fn fit(data: &Tensor, lattice: &Lattice, config: &TrainConfig) -> Result<FitResult> {
    let state = init_state(data, lattice, config)?;
    fit_from_state(state, data, lattice, config)
}

/// Runs the training loop from an existing state (resume, or fixtures with a
/// hand-constructed decoder).
pub fn fit_from_state(
    mut state: TrainState,
    data: &Tensor,
    lattice: &Lattice,
    config: &TrainConfig,
) -> Result<FitResult> {
    config.validate()?;
    let n = data.rows();

    // seeded validation split; mini-batch mode trains on all rows and
    // monitors the epoch training loss instead
    let val_count = if config.mode == TrainMode::FullBatch {
        (n as f64 * config.validation_fraction).floor() as usize
    } else {
        0
    };
    let (train_rows, val_rows) = if val_count > 0 && val_count < n {
        let mut rows: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SEED_SPLIT);
        rows.shuffle(&mut rng);
        let val: Vec<usize> = {
            let mut v = rows[..val_count].to_vec();
            v.sort_unstable();
            v
        };
        let train: Vec<usize> = {
            let mut t = rows[val_count..].to_vec();
            t.sort_unstable();
            t
        };
        (train, val)
    } else {
        ((0..n).collect(), Vec::new())
    };

    let mut best = f64::INFINITY;
    let mut counter = 0usize;
    for epoch in 1..=config.max_epochs {
        state.epoch = epoch;
        let started = Instant::now();
        let fraction = config
            .optimizer
            .schedule
            .cycle_fraction((epoch - 1) as f64);

        let step = (|| -> Result<(f64, Option<f64>, Option<AssignMethod>)> {
            match config.mode {
                TrainMode::FullBatch => {
                    let mean_loss =
                        decoder_step_on(&mut state, data, &train_rows, config, fraction)?;
                    let mut cost = None;
                    let mut method = None;
                    if epoch % config.assignment_period == 0 {
                        assignment_step_full(&mut state, data, lattice, config)?;
                        let a = state.last_assignment.as_ref().unwrap();
                        cost = Some(a.total_cost);
                        method = Some(a.method);
                    }
                    Ok((mean_loss, cost, method))
                }
                TrainMode::MiniBatch => minibatch_epoch(&mut state, data, lattice, config, fraction),
            }
        })();
        let (mean_loss, assignment_cost, assign_method) = match step {
            Ok(v) => v,
            Err(e @ Error::Numeric(_)) => {
                let dump = dump_state(&state)
                    .map(|p| format!("; state dumped to {}", p.display()))
                    .unwrap_or_default();
                return Err(Error::Numeric(format!("epoch {epoch}: {e}{dump}")));
            }
            Err(e) => return Err(e),
        };

        let val_loss = if val_rows.is_empty() {
            None
        } else {
            Some(mean_loss_on(
                &state.params,
                data,
                &state.latents,
                &val_rows,
                &config.loss,
            )?)
        };
        state.history.push(EpochRecord {
            epoch,
            mean_loss,
            assignment_cost,
            assign_method,
            epoch_ms: started.elapsed().as_secs_f64() * 1e3,
            val_loss,
            peak_rss_kb: peak_rss_kb(),
        });

        let monitored = val_loss.unwrap_or(mean_loss);
        let (new_best, new_counter, stop) = early_stop_update(best, monitored, counter, config.patience);
        best = new_best;
        counter = new_counter;
        if stop {
            break;
        }
    }

    Ok(FitResult {
        params: state.params,
        latents: state.latents,
        history: state.history,
        final_assignment: state.last_assignment,
    })
}

/// Sampling mode: decode stored codes or draw fresh latents from the prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    LatticeRows,
    PriorDraws,
}

/// A sampling request.
#[derive(Debug, Clone, Copy)]
pub struct SampleRequest {
    pub count: usize,
    pub mode: SampleMode,
    pub seed: u64,
}

fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.gen::<u64>() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Draws `count` latent vectors from the prior, via inverse-CDF transforms of
/// seeded uniforms.
pub fn draw_prior_latents(prior: &PriorSpec, count: usize, seed: u64) -> Result<Tensor> {
    let d = prior.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(count * d);
    for _ in 0..count {
        match prior.kind {
            PriorKind::Uniform01 => {
                for _ in 0..d {
                    data.push(open_unit(&mut rng));
                }
            }
            PriorKind::StandardGaussian => {
                for _ in 0..d {
                    data.push(crate::prior::normal_quantile(open_unit(&mut rng))?);
                }
            }
            PriorKind::UniformBall => {
                if d == 1 {
                    data.push(2.0 * open_unit(&mut rng) - 1.0);
                } else {
                    let mut dir = Vec::with_capacity(d);
                    for _ in 0..d {
                        dir.push(crate::prior::normal_quantile(open_unit(&mut rng))?);
                    }
                    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                    let radius = open_unit(&mut rng).powf(1.0 / d as f64);
                    for v in dir {
                        data.push(radius * v / norm);
                    }
                }
            }
        }
    }
    Tensor::matrix(count, d, data)
}

/// Decodes samples from a trained decoder.
///
/// `LatticeRows` decodes the first `count` rows of `codes` (the stored
/// lattice or exported memory bank); `PriorDraws` decodes seeded draws from
/// the prior.
pub fn sample(
    params: &DecoderParams,
    request: &SampleRequest,
    prior: &PriorSpec,
    codes: Option<&Tensor>,
) -> Result<Tensor> {
    if request.count == 0 {
        return Err(Error::Input("sample count must be >= 1".into()));
    }
    if prior.dim != params.input_dim() {
        return Err(Error::shape(
            "sample",
            format!("prior dimension {}", params.input_dim()),
            format!("{}", prior.dim),
        ));
    }
    let z = match request.mode {
        SampleMode::LatticeRows => {
            let codes = codes
                .ok_or_else(|| Error::Input("lattice_rows mode needs stored codes".into()))?;
            if request.count > codes.rows() {
                return Err(Error::Input(format!(
                    "requested {} rows but only {} codes are stored",
                    request.count,
                    codes.rows()
                )));
            }
            codes.gather_rows(&(0..request.count).collect::<Vec<_>>())?
        }
        SampleMode::PriorDraws => draw_prior_latents(prior, request.count, request.seed)?,
    };
    decode_rows(params, &z)
}

/// One exported latent row.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentRow {
    pub index: usize,
    pub coords: Vec<f64>,
    pub label: Option<i64>,
}

/// Flattens the memory bank into CSV-ready rows, preserving data order.
pub fn export_latents(latents: &Tensor, labels: Option<&[i64]>) -> Result<Vec<LatentRow>> {
    if let Some(l) = labels {
        if l.len() != latents.rows() {
            return Err(Error::shape(
                "export_latents",
                format!("{} labels", latents.rows()),
                format!("{}", l.len()),
            ));
        }
    }
    Ok((0..latents.rows())
        .map(|i| LatentRow {
            index: i,
            coords: latents.row(i).to_vec(),
            label: labels.map(|l| l[i]),
        })
        .collect())
}

/// Serializes history as `epoch,mean_loss,assignment_cost,assign_method,epoch_ms`.
pub fn history_to_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,mean_loss,assignment_cost,assign_method,epoch_ms\n");
    for r in history {
        let cost = r
            .assignment_cost
            .map(|c| format!("{c}"))
            .unwrap_or_default();
        let method = r.assign_method.map(|m| m.name()).unwrap_or("");
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.mean_loss, cost, method, r.epoch_ms
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{build_lattice, LatticeSource};

    fn small_lattice(n: usize, d: usize, seed: u64) -> Lattice {
        build_lattice(
            PriorSpec::new(PriorKind::Uniform01, d).unwrap(),
            n,
            LatticeSource::Sobol,
            seed,
        )
        .unwrap()
    }

    fn base_config() -> TrainConfig {
        TrainConfig {
            max_epochs: 4,
            batch_size: 8,
            hidden_widths: vec![8],
            output_activation: OutputActivation::Identity,
            validation_fraction: 0.0,
            optimizer: OptimizerConfig {
                weight_decay: 0.0,
                schedule: crate::tensorcore::Schedule::Constant,
                ..OptimizerConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    /// data = lattice rows shuffled by a known permutation, identity decoder.
    fn permutation_recovery_fixture(n: usize) -> (Tensor, Lattice, Vec<usize>, TrainConfig) {
        let lattice = small_lattice(n, 2, 3);
        let mut sigma: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        sigma.shuffle(&mut rng);
        let data = lattice.points.gather_rows(&sigma).unwrap();
        let mut config = base_config();
        config.momentum = 0.5;
        config.assignment_period = 1;
        config.optimizer.learning_rate = 0.0; // frozen identity decoder
        (data, lattice, sigma, config)
    }

    fn identity_state(lattice: &Lattice, data: &Tensor, config: &TrainConfig) -> TrainState {
        let mut state = init_state(data, lattice, config).unwrap();
        state.params = DecoderParams::identity(lattice.dim());
        state.opt = OptimizerState::new(&state.params);
        state
    }

    #[test]
    fn init_single_row() {
        let lattice = small_lattice(1, 2, 0);
        let data = Tensor::matrix(1, 3, vec![0.1, 0.2, 0.3]).unwrap();
        let mut config = base_config();
        config.batch_size = 1;
        let state = init_state(&data, &lattice, &config).unwrap();
        assert_eq!(state.latents.data(), lattice.points.data());
    }

    #[test]
    fn init_is_deterministic() {
        let lattice = small_lattice(16, 2, 0);
        let data = Tensor::matrix(16, 3, (0..48).map(|i| i as f64 / 48.0).collect()).unwrap();
        let config = base_config();
        let a = init_state(&data, &lattice, &config).unwrap();
        let b = init_state(&data, &lattice, &config).unwrap();
        assert_eq!(a.latents.data(), b.latents.data());
    }

    #[test]
    fn init_pca_sorted_aligns_sorted_axis() {
        // 4 data points already sorted by their first (dominant) coordinate
        let data = Tensor::matrix(
            4,
            2,
            vec![0.0, 0.01, 1.0, -0.02, 2.0, 0.0, 3.0, 0.01],
        )
        .unwrap();
        let lattice = build_lattice(
            PriorSpec::new(PriorKind::Uniform01, 1).unwrap(),
            4,
            LatticeSource::UnivariateQuantiles,
            0,
        )
        .unwrap();
        let mut config = base_config();
        config.init = LatentInit::PcaSorted;
        config.batch_size = 4;
        let state = init_state(&data, &lattice, &config).unwrap();
        assert_eq!(state.latents.data(), &[0.2, 0.4, 0.6, 0.8]);
    }

    #[test]
    fn decoder_step_zero_learning_rate_keeps_params() {
        let lattice = small_lattice(8, 2, 1);
        let data = Tensor::matrix(8, 3, (0..24).map(|i| i as f64 / 24.0).collect()).unwrap();
        let mut config = base_config();
        config.optimizer.learning_rate = 0.0;
        let mut state = init_state(&data, &lattice, &config).unwrap();
        state.epoch = 1;
        let before = state.params.clone();
        let mean = decoder_step(&mut state, &data, &config).unwrap();
        assert!(mean.is_finite() && mean > 0.0);
        assert_eq!(state.params, before);
    }

    #[test]
    fn decoder_step_global_minimum_is_fixed_point() {
        // identity decoder, latents equal to data, L2: zero gradient
        let lattice = small_lattice(8, 2, 2);
        let data = lattice.points.clone();
        let mut config = base_config();
        config.batch_size = 8;
        let mut state = identity_state(&lattice, &data, &config);
        state.latents = data.clone();
        state.epoch = 1;
        let before = state.params.clone();
        let mean = decoder_step(&mut state, &data, &config).unwrap();
        assert_eq!(mean, 0.0);
        assert_eq!(state.params, before);
    }

    #[test]
    fn decoder_step_loss_decreases() {
        let lattice = small_lattice(16, 2, 3);
        let data = Tensor::matrix(
            16,
            4,
            (0..64).map(|i| ((i * 37) % 100) as f64 / 100.0).collect(),
        )
        .unwrap();
        let mut config = base_config();
        config.optimizer.learning_rate = 1e-2;
        let mut state = init_state(&data, &lattice, &config).unwrap();
        let mut losses = Vec::new();
        for epoch in 1..=5 {
            state.epoch = epoch;
            losses.push(decoder_step(&mut state, &data, &config).unwrap());
        }
        assert!(
            losses.windows(2).all(|w| w[1] < w[0]),
            "losses not strictly decreasing: {losses:?}"
        );
    }

    #[test]
    fn assignment_full_zero_momentum_keeps_latents() {
        let (data, lattice, _, mut config) = permutation_recovery_fixture(8);
        config.momentum = 0.0;
        let mut state = identity_state(&lattice, &data, &config);
        let before = state.latents.data().to_vec();
        assignment_step_full(&mut state, &data, &lattice, &config).unwrap();
        assert_eq!(state.latents.data(), &before[..]);
    }

    #[test]
    fn assignment_full_high_momentum_nears_codes() {
        let (data, lattice, sigma, mut config) = permutation_recovery_fixture(8);
        config.momentum = 0.99;
        let mut state = identity_state(&lattice, &data, &config);
        let before = state.latents.clone();
        assignment_step_full(&mut state, &data, &lattice, &config).unwrap();
        let mapping = &state.last_assignment.as_ref().unwrap().mapping;
        assert_eq!(mapping, &sigma);
        for i in 0..8 {
            for j in 0..2 {
                let q = lattice.points.row(sigma[i])[j];
                let z0 = before.row(i)[j];
                let expected = 0.99 * q + (1.0 - 0.99) * z0;
                assert_eq!(state.latents.row(i)[j], expected);
                assert!((state.latents.row(i)[j] - q).abs() <= 0.01 * (z0 - q).abs() + 1e-12);
            }
        }
    }

    #[test]
    fn assignment_recovers_shuffling_permutation() {
        let (data, lattice, sigma, config) = permutation_recovery_fixture(16);
        let mut state = identity_state(&lattice, &data, &config);
        assignment_step_full(&mut state, &data, &lattice, &config).unwrap();
        let a = state.last_assignment.as_ref().unwrap();
        assert_eq!(a.mapping, sigma);
        assert_eq!(a.total_cost, 0.0);
        // momentum moved each latent halfway toward its matched row
        for i in 0..16 {
            for j in 0..2 {
                let q = lattice.points.row(sigma[i])[j];
                let z0 = lattice
                    .points
                    .gather_rows(&initial_perm(16, config.seed))
                    .unwrap()
                    .row(i)[j];
                assert_eq!(state.latents.row(i)[j], 0.5 * q + 0.5 * z0);
            }
        }
    }

    fn initial_perm(n: usize, seed: u64) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SEED_PERM);
        perm.shuffle(&mut rng);
        perm
    }

    #[test]
    fn minibatch_singleton_moves_only_target_row() {
        let lattice = small_lattice(8, 2, 5);
        let data = lattice.points.clone();
        let mut config = base_config();
        config.momentum = 0.7;
        let mut state = identity_state(&lattice, &data, &config);
        let before = state.latents.clone();
        assignment_step_minibatch(&mut state, &data, &[0], &[5], &lattice, &config).unwrap();
        for i in 1..8 {
            let same = state
                .latents
                .row(i)
                .iter()
                .zip(before.row(i))
                .all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same, "row {i} changed");
        }
        for j in 0..2 {
            let expected = 0.7 * lattice.points.row(5)[j] + (1.0 - 0.7) * before.row(0)[j];
            assert_eq!(state.latents.row(0)[j], expected);
        }
    }

    #[test]
    fn minibatch_rejects_duplicates() {
        let lattice = small_lattice(8, 2, 5);
        let data = lattice.points.clone();
        let config = base_config();
        let mut state = identity_state(&lattice, &data, &config);
        assert!(matches!(
            assignment_step_minibatch(&mut state, &data, &[0, 0], &[1, 2], &lattice, &config),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            assignment_step_minibatch(&mut state, &data, &[0, 1], &[2, 2], &lattice, &config),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn minibatch_epoch_covers_every_row_once() {
        let n = 64;
        let lattice = small_lattice(n, 2, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data =
            Tensor::matrix(n, 2, (0..2 * n).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let mut config = base_config();
        config.mode = TrainMode::MiniBatch;
        config.batch_size = 8;
        config.momentum = 0.9;
        config.optimizer.learning_rate = 0.0;
        let mut state = identity_state(&lattice, &data, &config);
        state.epoch = 1;
        // park the memory bank far from the lattice so each momentum update
        // is visible exactly once
        for v in state.latents.data_mut() {
            *v = 5.0;
        }
        let before = state.latents.clone();
        minibatch_epoch(&mut state, &data, &lattice, &config, 0.0).unwrap();
        // rho = 0.9 pulls every row into (0,1)-ish territory, so all differ
        let mut updated = 0;
        for i in 0..n {
            if state.latents.row(i) != before.row(i) {
                updated += 1;
            }
        }
        assert_eq!(updated, n);
    }

    #[test]
    fn minibatch_full_size_matches_full_batch_assignment() {
        for seed in 0..20u64 {
            let n = 24;
            let lattice = small_lattice(n, 2, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
            let data = Tensor::matrix(
                n,
                2,
                (0..2 * n).map(|_| rng.gen::<f64>()).collect(),
            )
            .unwrap();
            let config = base_config();

            // full-batch assignment
            let mut full = identity_state(&lattice, &data, &config);
            assignment_step_full(&mut full, &data, &lattice, &config).unwrap();
            let full_mapping = full.last_assignment.as_ref().unwrap().mapping.clone();

            // one mini-batch covering everything, in shuffled order
            let mut mini = identity_state(&lattice, &data, &config);
            let mut batch: Vec<usize> = (0..n).collect();
            batch.shuffle(&mut rng);
            let subset: Vec<usize> = (0..n).collect();
            let a = assignment_step_minibatch(&mut mini, &data, &batch, &subset, &lattice, &config)
                .unwrap();
            let mut composed = vec![0usize; n];
            for (j, &row) in batch.iter().enumerate() {
                composed[row] = subset[a.mapping[j]];
            }
            assert_eq!(composed, full_mapping, "seed {seed}");
        }
    }

    #[test]
    fn fit_zero_epochs_returns_initial_state() {
        let lattice = small_lattice(8, 2, 1);
        let data = Tensor::matrix(8, 3, (0..24).map(|i| i as f64 / 24.0).collect()).unwrap();
        let mut config = base_config();
        config.max_epochs = 0;
        let result = fit(&data, &lattice, &config).unwrap();
        let init = init_state(&data, &lattice, &config).unwrap();
        assert!(result.history.is_empty());
        assert_eq!(result.latents.data(), init.latents.data());
        assert_eq!(result.params, init.params);
        assert!(result.final_assignment.is_none());
    }

    #[test]
    fn fit_recovers_permutation_within_three_iterations() {
        let (data, lattice, sigma, mut config) = permutation_recovery_fixture(16);
        config.max_epochs = 3;
        config.validation_fraction = 0.0;
        let state = identity_state(&lattice, &data, &config);
        let result = fit_from_state(state, &data, &lattice, &config).unwrap();
        let recovered = result
            .history
            .iter()
            .any(|r| r.assignment_cost.is_some_and(|c| c < 1e-12));
        assert!(recovered, "history: {:?}", result.history);
        assert_eq!(result.final_assignment.unwrap().mapping, sigma);
    }

    #[test]
    fn fit_is_bitwise_deterministic() {
        let lattice = small_lattice(24, 2, 4);
        let data = Tensor::matrix(
            24,
            3,
            (0..72).map(|i| ((i * 53) % 97) as f64 / 97.0).collect(),
        )
        .unwrap();
        let mut config = base_config();
        config.max_epochs = 5;
        config.assignment_period = 2;
        config.validation_fraction = 0.125;
        let a = fit(&data, &lattice, &config).unwrap();
        let b = fit(&data, &lattice, &config).unwrap();
        assert_eq!(a.history.len(), b.history.len());
        for (ra, rb) in a.history.iter().zip(b.history.iter()) {
            assert_eq!(ra.mean_loss.to_bits(), rb.mean_loss.to_bits());
            assert_eq!(
                ra.assignment_cost.map(f64::to_bits),
                rb.assignment_cost.map(f64::to_bits)
            );
            assert_eq!(ra.val_loss.map(f64::to_bits), rb.val_loss.map(f64::to_bits));
        }
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.latents), bits(&b.latents));
    }

    #[test]
    fn fit_minibatch_smoke() {
        let lattice = small_lattice(32, 2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data =
            Tensor::matrix(32, 4, (0..128).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let mut config = base_config();
        config.mode = TrainMode::MiniBatch;
        config.batch_size = 8;
        config.max_epochs = 3;
        let result = fit(&data, &lattice, &config).unwrap();
        assert_eq!(result.history.len(), 3);
        for r in &result.history {
            assert!(r.assignment_cost.is_some());
            assert!(r.mean_loss.is_finite());
        }
    }

    #[test]
    fn sample_lattice_rows_reproduces_reconstructions() {
        let lattice = small_lattice(8, 2, 9);
        let params = DecoderParams::seeded(
            &[2, 6, 4],
            Activation::Relu,
            OutputActivation::Sigmoid,
            11,
        )
        .unwrap();
        let request = SampleRequest {
            count: 8,
            mode: SampleMode::LatticeRows,
            seed: 0,
        };
        let prior = PriorSpec::new(PriorKind::Uniform01, 2).unwrap();
        let out = sample(&params, &request, &prior, Some(&lattice.points)).unwrap();
        let direct = decode_rows(&params, &lattice.points).unwrap();
        assert_eq!(out.data(), direct.data());
    }

    #[test]
    fn sample_rejects_zero_count_and_overflow() {
        let params = DecoderParams::identity(2);
        let prior = PriorSpec::new(PriorKind::Uniform01, 2).unwrap();
        let codes = Tensor::matrix(3, 2, vec![0.1; 6]).unwrap();
        let bad = SampleRequest {
            count: 0,
            mode: SampleMode::PriorDraws,
            seed: 0,
        };
        assert!(sample(&params, &bad, &prior, None).is_err());
        let overflow = SampleRequest {
            count: 4,
            mode: SampleMode::LatticeRows,
            seed: 0,
        };
        assert!(sample(&params, &overflow, &prior, Some(&codes)).is_err());
    }

    #[test]
    fn sample_gaussian_draws_match_compositional_oracle() {
        let params = DecoderParams::seeded(
            &[2, 5, 3],
            Activation::Tanh,
            OutputActivation::Identity,
            13,
        )
        .unwrap();
        let prior = PriorSpec::new(PriorKind::StandardGaussian, 2).unwrap();
        let request = SampleRequest {
            count: 4,
            mode: SampleMode::PriorDraws,
            seed: 9,
        };
        let got = sample(&params, &request, &prior, None).unwrap();

        // independent composition: seeded uniforms -> inverse CDF -> forward
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..4 {
            let mut z = [0.0; 2];
            for slot in z.iter_mut() {
                let u = ((rng.gen::<u64>() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
                *slot = crate::prior::normal_quantile(u).unwrap();
            }
            let y = params.forward(&z).unwrap();
            assert_eq!(got.row(i), y.as_slice(), "row {i}");
        }
    }

    #[test]
    fn sample_is_seed_deterministic() {
        let params = DecoderParams::identity(3);
        let prior = PriorSpec::new(PriorKind::UniformBall, 3).unwrap();
        let request = SampleRequest {
            count: 16,
            mode: SampleMode::PriorDraws,
            seed: 21,
        };
        let a = sample(&params, &request, &prior, None).unwrap();
        let b = sample(&params, &request, &prior, None).unwrap();
        assert_eq!(a.data(), b.data());
        // ball draws stay inside the unit ball
        for i in 0..16 {
            let norm2: f64 = a.row(i).iter().map(|v| v * v).sum();
            assert!(norm2 < 1.0);
        }
    }

    #[test]
    fn export_latents_rows_and_labels() {
        let latents = Tensor::matrix(1, 2, vec![0.3, -0.4]).unwrap();
        let rows = export_latents(&latents, None).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].coords, vec![0.3, -0.4]);
        assert_eq!(rows[0].index, 0);

        let many = Tensor::matrix(3, 1, vec![0.1, 0.2, 0.3]).unwrap();
        let rows = export_latents(&many, Some(&[5, 6, 7])).unwrap();
        assert_eq!(
            rows.iter().map(|r| r.index).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert_eq!(rows[2].label, Some(7));
        assert!(export_latents(&many, Some(&[1])).is_err());
    }

    #[test]
    fn export_matches_hand_mixed_rows() {
        let (data, lattice, sigma, config) = permutation_recovery_fixture(8);
        let mut state = identity_state(&lattice, &data, &config);
        let z0 = state.latents.clone();
        assignment_step_full(&mut state, &data, &lattice, &config).unwrap();
        let rows = export_latents(&state.latents, None).unwrap();
        for (i, row) in rows.iter().enumerate() {
            for j in 0..2 {
                let expected = 0.5 * lattice.points.row(sigma[i])[j] + 0.5 * z0.row(i)[j];
                assert_eq!(row.coords[j], expected);
            }
        }
    }

    #[test]
    fn one_dimensional_matching_is_monotone() {
        // optimal squared-error assignment in 1-d matches sorted latents to
        // sorted quantiles; checked against brute force
        use crate::assign::{solve_brute_force, CostMatrix};
        for n in 2..=8usize {
            for seed in 0..10u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + n as u64);
                let z: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                let lattice = build_lattice(
                    PriorSpec::new(PriorKind::Uniform01, 1).unwrap(),
                    n,
                    LatticeSource::UnivariateQuantiles,
                    0,
                )
                .unwrap();
                let q = lattice.points.data();
                let entries: Vec<f64> = z
                    .iter()
                    .flat_map(|zi| q.iter().map(move |qk| (zi - qk) * (zi - qk)))
                    .collect();
                let c = CostMatrix::new(n, n, entries).unwrap();
                let best = solve_brute_force(&c).unwrap();
                // rank of z_i equals rank of its assigned quantile
                let mut rank: Vec<usize> = (0..n).collect();
                rank.sort_by(|&a, &b| z[a].partial_cmp(&z[b]).unwrap());
                for (r, &i) in rank.iter().enumerate() {
                    assert_eq!(best.mapping[i], r, "n={n} seed={seed}");
                }
            }
        }
    }

    #[test]
    fn history_csv_shape() {
        let history = vec![
            EpochRecord {
                epoch: 1,
                mean_loss: 0.5,
                assignment_cost: None,
                assign_method: None,
                epoch_ms: 1.25,
                val_loss: None,
                peak_rss_kb: None,
            },
            EpochRecord {
                epoch: 2,
                mean_loss: 0.25,
                assignment_cost: Some(1.5),
                assign_method: Some(AssignMethod::Hungarian),
                epoch_ms: 2.0,
                val_loss: Some(0.3),
                peak_rss_kb: Some(1024),
            },
        ];
        let csv = history_to_csv(&history);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "epoch,mean_loss,assignment_cost,assign_method,epoch_ms"
        );
        assert_eq!(lines[1], "1,0.5,,,1.25");
        assert_eq!(lines[2], "2,0.25,1.5,hungarian,2");
    }
}
