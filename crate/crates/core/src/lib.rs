//! Encoder-free latent-variable generative modeling by quantile assignment.
//!
//! Latent codes live on a fixed low-discrepancy lattice discretizing a known
//! prior. Data points are matched to lattice codes by solving linear
//! assignment problems over a reconstruction cost matrix, and a single
//! decoder network is trained by plain regression on the assigned codes.
//! No encoder, no discriminator, no iterative sampler.
//!
//! The crate is organized around that loop:
//!
//! - [`tensorcore`]: dense `f64` tensors, a feed-forward decoder with
//!   hand-derived backpropagation, AdamW with cosine warm restarts, early
//!   stopping, and the binary checkpoint format.
//! - [`prior`]: quantile lattices — univariate inverse-CDF quantiles, Sobol
//!   low-discrepancy points with a seeded digital shift, and pushforwards to
//!   Gaussian and uniform-ball priors.
//! - [`assign`]: cost-matrix construction plus exact (Hungarian), approximate
//!   (greedy), and brute-force assignment solvers.
//! - [`metrics`]: training losses (L1/L2/SSIM+L1) and evaluation metrics
//!   (SSIM statistics, proxy Frechet distance over fixed random features).
//! - [`train`]: the full-batch and mini-batch training loops with the latent
//!   momentum memory bank, plus sampling from a trained decoder.
//! - [`dataio`]: IDX image ingestion, the raw tensor container, CSV, and
//!   synthetic dataset generators.

pub mod assign;
pub mod dataio;
pub mod error;
pub mod metrics;
pub mod prior;
pub mod tensorcore;
pub mod train;

pub use error::{Error, Result};
