use crate::error::{Error, Result};
use crate::tensorcore::{DecoderGrads, DecoderParams};

/// Learning-rate schedule, evaluated on the fraction through the current
/// restart period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Constant,
    CosineWarmRestarts { period_epochs: usize },
}

impl Schedule {
    /// Maps an absolute (possibly fractional) epoch position to the fraction
    /// through the current cycle in `[0, 1)`.
    pub fn cycle_fraction(&self, epoch: f64) -> f64 {
        match self {
            Schedule::Constant => 0.0,
            Schedule::CosineWarmRestarts { period_epochs } => {
                let p = (*period_epochs).max(1) as f64;
                (epoch.max(0.0) % p) / p
            }
        }
    }

    fn lr_factor(&self, fraction: f64) -> f64 {
        match self {
            Schedule::Constant => 1.0,
            Schedule::CosineWarmRestarts { .. } => {
                0.5 * (1.0 + (std::f64::consts::PI * fraction).cos())
            }
        }
    }
}

/// AdamW hyperparameters: decoupled weight decay, global-norm gradient
/// clipping, and the learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub grad_clip_norm: f64,
    pub schedule: Schedule,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            betas: (0.9, 0.999),
            eps: 1e-8,
            grad_clip_norm: 1.0,
            schedule: Schedule::CosineWarmRestarts { period_epochs: 50 },
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        // zero freezes the decoder (used by assignment-only fixtures)
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(Error::Config(format!(
                "grad_clip_norm must be > 0, got {}",
                self.grad_clip_norm
            )));
        }
        for (name, b) in [("beta1", self.betas.0), ("beta2", self.betas.1)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{name} must be in (0,1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }

    /// Effective learning rate at a given fraction through the schedule cycle.
    pub fn effective_lr(&self, epoch_fraction: f64) -> f64 {
        self.learning_rate * self.schedule.lr_factor(epoch_fraction)
    }
}

/// First/second moment accumulators and the step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub first_moment: DecoderGrads,
    pub second_moment: DecoderGrads,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &DecoderParams) -> Self {
        OptimizerState {
            first_moment: DecoderGrads::zeros_like(params),
            second_moment: DecoderGrads::zeros_like(params),
            step: 0,
        }
    }
}

/// One AdamW update.
///
/// The global gradient norm is clipped to `config.grad_clip_norm` before the
/// moment updates; weight decay is decoupled (applied directly to the
/// parameters, scaled by the effective learning rate); the learning rate
/// follows the configured schedule evaluated at `epoch_fraction in [0,1]`.
pub fn adamw_step(
    params: &mut DecoderParams,
    state: &mut OptimizerState,
    grads: &DecoderGrads,
    config: &OptimizerConfig,
    epoch_fraction: f64,
) -> Result<()> {
    for (l, layer) in grads.layers.iter().enumerate() {
        for (name, t) in [("weight", &layer.weight), ("bias", &layer.bias)] {
            if t.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "adamw_step: non-finite gradient in layer {l} {name}"
                )));
            }
        }
    }

    let norm = grads.global_norm();
    let clip = if norm > config.grad_clip_norm {
        config.grad_clip_norm / norm
    } else {
        1.0
    };

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = config.betas;
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);
    let lr = config.effective_lr(epoch_fraction);

    for l in 0..params.layers.len() {
        for pick in 0..2 {
            let (p, g, m, v) = if pick == 0 {
                (
                    params.layers[l].weight.data_mut(),
                    grads.layers[l].weight.data(),
                    state.first_moment.layers[l].weight.data_mut(),
                    state.second_moment.layers[l].weight.data_mut(),
                )
            } else {
                (
                    params.layers[l].bias.data_mut(),
                    grads.layers[l].bias.data(),
                    state.first_moment.layers[l].bias.data_mut(),
                    state.second_moment.layers[l].bias.data_mut(),
                )
            };
            for i in 0..p.len() {
                let gi = g[i] * clip;
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= lr * (m_hat / (v_hat.sqrt() + config.eps) + config.weight_decay * p[i]);
            }
        }
    }
    Ok(())
}

/// Early-stopping bookkeeping on a monitored loss.
///
/// The counter resets on strict improvement; `should_stop` is true once the
/// counter reaches `patience`.
pub fn early_stop_update(
    best_loss: f64,
    current_loss: f64,
    patience_counter: usize,
    patience: usize,
) -> (f64, usize, bool) {
    debug_assert!(patience >= 1);
    if current_loss < best_loss {
        (current_loss, 0, false)
    } else {
        let counter = patience_counter + 1;
        (best_loss, counter, counter >= patience)
    }
}
