//! The run configuration file: a TOML document with an explicit schema
//! version, explicit seeds (default 0), and no unknown keys. A fully
//! resolved snapshot of this structure is written next to every training
//! run so the run can be replayed from the snapshot alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nsql_core::dataio::{self, Dataset, SyntheticKind, SyntheticSpec};
use nsql_core::metrics::{LossKind, LossSpec};
use nsql_core::prior::{LatticeSource, PriorKind, PriorSpec};
use nsql_core::tensorcore::{Activation, OptimizerConfig, OutputActivation, Schedule};
use nsql_core::train::{AssignSolver, LatentInit, TrainConfig, TrainMode};
use nsql_core::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub prior: PriorSection,
    #[serde(default)]
    pub lattice: LatticeSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub train: TrainSection,
    pub data: DataSection,
    /// Image shape recorded while resolving the dataset; filled in the
    /// snapshot so sampling can rebuild image dumps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_image_shape: Option<[usize; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub kind: String,
    pub dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    #[serde(default = "default_lattice_source")]
    pub source: String,
    #[serde(default)]
    pub seed: u64,
}

impl Default for LatticeSection {
    fn default() -> Self {
        LatticeSection {
            source: default_lattice_source(),
            seed: 0,
        }
    }
}

fn default_lattice_source() -> String {
    "sobol".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    #[serde(default = "default_loss_kind")]
    pub kind: String,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_data_range")]
    pub data_range: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection {
            kind: default_loss_kind(),
            window: default_window(),
            data_range: default_data_range(),
        }
    }
}

fn default_loss_kind() -> String {
    "l2".into()
}
fn default_window() -> usize {
    7
}
fn default_data_range() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_clip")]
    pub grad_clip_norm: f64,
    #[serde(default = "default_schedule")]
    pub schedule: String,
    #[serde(default = "default_period")]
    pub schedule_period_epochs: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            learning_rate: default_lr(),
            weight_decay: default_weight_decay(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            grad_clip_norm: default_clip(),
            schedule: default_schedule(),
            schedule_period_epochs: default_period(),
        }
    }
}

fn default_lr() -> f64 {
    1e-3
}
fn default_weight_decay() -> f64 {
    1e-4
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_clip() -> f64 {
    1.0
}
fn default_schedule() -> String {
    "cosine_warm_restarts".into()
}
fn default_period() -> usize {
    50
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_assignment_period")]
    pub assignment_period: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_assign_method")]
    pub assign_method: String,
    #[serde(default = "default_greedy_threshold")]
    pub greedy_threshold: usize,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_init")]
    pub init: String,
    #[serde(default = "default_decoder_steps")]
    pub decoder_steps_per_epoch: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_val_fraction")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_hidden")]
    pub hidden_widths: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: String,
    #[serde(default = "default_output_activation")]
    pub output_activation: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        toml::from_str("").expect("empty TrainSection defaults")
    }
}

fn default_epochs() -> usize {
    100
}
fn default_assignment_period() -> usize {
    3
}
fn default_momentum() -> f64 {
    0.7
}
fn default_batch() -> usize {
    64
}
fn default_assign_method() -> String {
    "auto".into()
}
fn default_greedy_threshold() -> usize {
    2048
}
fn default_mode() -> String {
    "full_batch".into()
}
fn default_init() -> String {
    "random".into()
}
fn default_decoder_steps() -> usize {
    1
}
fn default_patience() -> usize {
    25
}
fn default_val_fraction() -> f64 {
    0.1
}
fn default_hidden() -> Vec<usize> {
    vec![256, 256]
}
fn default_activation() -> String {
    "relu".into()
}
fn default_output_activation() -> String {
    "sigmoid".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default = "default_factor")]
    pub downsample: usize,
    /// Cap on the number of rows used (0 = all).
    #[serde(default)]
    pub limit: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSection>,
}

fn default_factor() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub d: usize,
    pub p: usize,
    pub n: usize,
    #[serde(default = "default_generator")]
    pub generator: String,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_generator() -> String {
    "linear".into()
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| config_err(format!("config parse: {e}")))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String, Error> {
        toml::to_string_pretty(self).map_err(|e| config_err(format!("config serialize: {e}")))
    }

    pub fn prior_spec(&self) -> Result<PriorSpec, Error> {
        let kind = match self.prior.kind.as_str() {
            "uniform01" => PriorKind::Uniform01,
            "standard_gaussian" => PriorKind::StandardGaussian,
            "uniform_ball" => PriorKind::UniformBall,
            other => {
                return Err(config_err(format!(
                    "unknown prior kind \"{other}\" (uniform01 | standard_gaussian | uniform_ball)"
                )))
            }
        };
        PriorSpec::new(kind, self.prior.dim)
    }

    pub fn lattice_source(&self) -> Result<LatticeSource, Error> {
        match self.lattice.source.as_str() {
            "univariate_quantiles" => Ok(LatticeSource::UnivariateQuantiles),
            "sobol" => Ok(LatticeSource::Sobol),
            "uniform_grid" => Ok(LatticeSource::UniformGrid),
            other => Err(config_err(format!(
                "unknown lattice source \"{other}\" (univariate_quantiles | sobol | uniform_grid)"
            ))),
        }
    }

    /// Loss spec; ssim_l1 takes its image shape from the dataset.
    pub fn loss_spec(&self, image_shape: Option<(usize, usize, usize)>) -> Result<LossSpec, Error> {
        let spec = match self.loss.kind.as_str() {
            "l2" => LossSpec {
                data_range: self.loss.data_range,
                ..LossSpec::l2()
            },
            "l1" => LossSpec {
                data_range: self.loss.data_range,
                ..LossSpec::l1()
            },
            "ssim_l1" => {
                let shape = image_shape.ok_or_else(|| {
                    config_err("ssim_l1 loss requires an image-shaped dataset")
                })?;
                LossSpec {
                    kind: LossKind::SsimL1,
                    image_shape: Some(shape),
                    window: self.loss.window,
                    data_range: self.loss.data_range,
                }
            }
            other => {
                return Err(config_err(format!(
                    "unknown loss kind \"{other}\" (l2 | l1 | ssim_l1)"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn optimizer_config(&self) -> Result<OptimizerConfig, Error> {
        let schedule = match self.optimizer.schedule.as_str() {
            "constant" => Schedule::Constant,
            "cosine_warm_restarts" => Schedule::CosineWarmRestarts {
                period_epochs: self.optimizer.schedule_period_epochs,
            },
            other => {
                return Err(config_err(format!(
                    "unknown schedule \"{other}\" (constant | cosine_warm_restarts)"
                )))
            }
        };
        let config = OptimizerConfig {
            learning_rate: self.optimizer.learning_rate,
            weight_decay: self.optimizer.weight_decay,
            betas: (self.optimizer.beta1, self.optimizer.beta2),
            eps: self.optimizer.eps,
            grad_clip_norm: self.optimizer.grad_clip_norm,
            schedule,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn train_config(
        &self,
        image_shape: Option<(usize, usize, usize)>,
    ) -> Result<TrainConfig, Error> {
        let solver = match self.train.assign_method.as_str() {
            "auto" => AssignSolver::Auto,
            "hungarian" => AssignSolver::Hungarian,
            "greedy" => AssignSolver::Greedy,
            other => {
                return Err(config_err(format!(
                    "unknown assign_method \"{other}\" (auto | hungarian | greedy)"
                )))
            }
        };
        let mode = match self.train.mode.as_str() {
            "full_batch" => TrainMode::FullBatch,
            "minibatch" => TrainMode::MiniBatch,
            other => {
                return Err(config_err(format!(
                    "unknown train mode \"{other}\" (full_batch | minibatch)"
                )))
            }
        };
        let init = match self.train.init.as_str() {
            "random" => LatentInit::Random,
            "pca_sorted" => LatentInit::PcaSorted,
            other => {
                return Err(config_err(format!(
                    "unknown init \"{other}\" (random | pca_sorted)"
                )))
            }
        };
        let activation = match self.train.activation.as_str() {
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            other => return Err(config_err(format!("unknown activation \"{other}\""))),
        };
        let output_activation = match self.train.output_activation.as_str() {
            "sigmoid" => OutputActivation::Sigmoid,
            "identity" => OutputActivation::Identity,
            other => {
                return Err(config_err(format!(
                    "unknown output activation \"{other}\""
                )))
            }
        };
        let config = TrainConfig {
            max_epochs: self.train.max_epochs,
            assignment_period: self.train.assignment_period,
            momentum: self.train.momentum,
            batch_size: self.train.batch_size,
            solver,
            greedy_threshold: self.train.greedy_threshold,
            loss: self.loss_spec(image_shape)?,
            optimizer: self.optimizer_config()?,
            patience: self.train.patience,
            validation_fraction: self.train.validation_fraction,
            seed: self.train.seed,
            decoder_steps_per_epoch: self.train.decoder_steps_per_epoch,
            mode,
            init,
            hidden_widths: self.train.hidden_widths.clone(),
            activation,
            output_activation,
        };
        config.validate()?;
        Ok(config)
    }

    /// Loads the dataset, applying the optional row limit and downsampling,
    /// and canonicalizes paths so the snapshot replays from anywhere.
    pub fn load_dataset(&mut self, data_override: Option<&Path>) -> Result<Dataset, Error> {
        if let Some(path) = data_override {
            match self.data.kind.as_str() {
                "idx" => self.data.images = Some(path.to_path_buf()),
                "container" | "csv" => self.data.path = Some(path.to_path_buf()),
                _ => {
                    return Err(config_err(
                        "--data override applies to idx/container/csv datasets",
                    ))
                }
            }
        }
        let mut ds = match self.data.kind.as_str() {
            "idx" => {
                let images = self
                    .data
                    .images
                    .clone()
                    .ok_or_else(|| config_err("[data] kind=idx needs images = \"path\""))?;
                let images = canonical(&images)?;
                let labels = match &self.data.labels {
                    Some(l) => Some(canonical(l)?),
                    None => None,
                };
                self.data.images = Some(images.clone());
                self.data.labels = labels.clone();
                dataio::read_idx(&images, labels.as_deref())?
            }
            "container" => {
                let path = self
                    .data
                    .path
                    .clone()
                    .ok_or_else(|| config_err("[data] kind=container needs path = \"path\""))?;
                let path = canonical(&path)?;
                self.data.path = Some(path.clone());
                let samples = dataio::read_tensor(&path)?;
                Dataset::new(samples, None, None, format!("container:{}", path.display()))?
            }
            "csv" => {
                let path = self
                    .data
                    .path
                    .clone()
                    .ok_or_else(|| config_err("[data] kind=csv needs path = \"path\""))?;
                let path = canonical(&path)?;
                self.data.path = Some(path.clone());
                dataio::read_csv_dataset(&path)?
            }
            "synthetic" => {
                let section = self
                    .data
                    .synthetic
                    .as_ref()
                    .ok_or_else(|| config_err("[data] kind=synthetic needs a [data.synthetic] table"))?;
                let kind = match section.generator.as_str() {
                    "linear" => SyntheticKind::Linear,
                    "mlp_fixed_seed" => SyntheticKind::MlpFixedSeed,
                    other => {
                        return Err(config_err(format!(
                            "unknown synthetic generator \"{other}\""
                        )))
                    }
                };
                let spec = SyntheticSpec {
                    latent_dim: section.d,
                    ambient_dim: section.p,
                    n: section.n,
                    kind,
                    noise_sigma: section.noise_sigma,
                    seed: section.seed,
                };
                make_limited(&spec)?
            }
            other => {
                return Err(config_err(format!(
                    "unknown data kind \"{other}\" (idx | container | csv | synthetic)"
                )))
            }
        };
        if self.data.limit > 0 && self.data.limit < ds.n() {
            let rows: Vec<usize> = (0..self.data.limit).collect();
            ds = Dataset::new(
                ds.samples.gather_rows(&rows)?,
                ds.labels.as_ref().map(|l| l[..self.data.limit].to_vec()),
                ds.image_shape,
                format!("{}|limit:{}", ds.provenance, self.data.limit),
            )?;
        }
        if self.data.downsample > 1 {
            ds = dataio::downsample(&ds, self.data.downsample)?;
        }
        self.resolved_image_shape = ds.image_shape.map(|(h, w, c)| [h, w, c]);
        Ok(ds)
    }
}

fn make_limited(spec: &SyntheticSpec) -> Result<Dataset, Error> {
    let (ds, _) = dataio::make_synthetic(spec)?;
    Ok(ds)
}

fn canonical(path: &Path) -> Result<PathBuf, Error> {
    path.canonicalize()
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}
