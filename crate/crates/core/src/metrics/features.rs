//! Fixed random feature maps and the proxy Frechet metric.
//!
//! The feature extractor is a frozen two-stage random linear+relu map with a
//! seed-determined weight draw; it is never trained. Real and generated
//! samples are projected, moment-fitted, and compared with the Frechet
//! distance between the two Gaussian fits.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::linalg::{psd_sqrt, symmetric_eigen};
use crate::prior::normal_quantile;
use crate::tensorcore::Tensor;

/// Frozen random projection: input -> 2*feature_dim -> feature_dim, relu
/// after each stage, no offsets. Weights are a pure function of
/// (seed, input_dim, feature_dim).
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub seed: u64,
    pub input_dim: usize,
    pub feature_dim: usize,
    stage1: Tensor,
    stage2: Tensor,
}

impl FeatureExtractor {
    pub fn new(seed: u64, input_dim: usize, feature_dim: usize) -> Result<Self> {
        if input_dim == 0 || feature_dim == 0 {
            return Err(Error::Config(
                "feature extractor dimensions must be positive".into(),
            ));
        }
        let hidden = feature_dim * 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stage1 = random_projection(&mut rng, hidden, input_dim)?;
        let stage2 = random_projection(&mut rng, feature_dim, hidden)?;
        Ok(FeatureExtractor {
            seed,
            input_dim,
            feature_dim,
            stage1,
            stage2,
        })
    }
}

fn random_projection(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Result<Tensor> {
    let scale = 1.0 / (cols as f64).sqrt();
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let u = (rng.gen::<u64>() >> 11) as f64 / (1u64 << 53) as f64;
        let u = u.max(f64::MIN_POSITIVE); // keep strictly inside (0,1)
        data.push(scale * normal_quantile(u)?);
    }
    Tensor::matrix(rows, cols, data)
}

fn relu_project(weights: &Tensor, x: &[f64], out: &mut [f64]) {
    let (rows, cols) = (weights.rows(), weights.cols());
    let w = weights.data();
    for o in 0..rows {
        let mut acc = 0.0;
        let base = o * cols;
        for i in 0..cols {
            acc += w[base + i] * x[i];
        }
        out[o] = if acc > 0.0 { acc } else { 0.0 };
    }
}

/// Projects an `n x input_dim` batch to `n x feature_dim` features.
pub fn extract_features(fe: &FeatureExtractor, batch: &Tensor) -> Result<Tensor> {
    if batch.cols() != fe.input_dim {
        return Err(Error::shape(
            "extract_features",
            format!("{} columns", fe.input_dim),
            format!("{} columns", batch.cols()),
        ));
    }
    let n = batch.rows();
    let hidden = fe.feature_dim * 2;
    let mut out = vec![0.0; n * fe.feature_dim];
    out.par_chunks_mut(fe.feature_dim)
        .enumerate()
        .for_each(|(i, dst)| {
            let mut mid = vec![0.0; hidden];
            relu_project(&fe.stage1, batch.row(i), &mut mid);
            relu_project(&fe.stage2, &mid, dst);
        });
    Tensor::matrix(n, fe.feature_dim, out)
}

/// First and second moments of a feature cloud.
#[derive(Debug, Clone)]
pub struct GaussianFit {
    pub mean: Vec<f64>,
    /// Row-major symmetric covariance (sample covariance, 1/(n-1)).
    pub covariance: Vec<f64>,
    pub dim: usize,
}

/// Fits mean and sample covariance to an `n x k` feature matrix, n >= 2.
pub fn fit_gaussian(features: &Tensor) -> Result<GaussianFit> {
    let n = features.rows();
    let k = features.cols();
    if n < 2 {
        return Err(Error::Input(format!(
            "gaussian fit needs at least 2 samples, got {n}"
        )));
    }
    let mut mean = vec![0.0; k];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(features.row(i)) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut cov = vec![0.0; k * k];
    for i in 0..n {
        let row = features.row(i);
        for a in 0..k {
            let da = row[a] - mean[a];
            for b in a..k {
                cov[a * k + b] += da * (row[b] - mean[b]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..k {
        for b in a..k {
            let v = cov[a * k + b] / denom;
            cov[a * k + b] = v;
            cov[b * k + a] = v;
        }
    }
    Ok(GaussianFit {
        mean,
        covariance: cov,
        dim: k,
    })
}

/// Frechet distance between two Gaussian fits:
/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2),
/// computed by symmetric eigendecomposition and clamped to be nonnegative.
pub fn frechet_distance(a: &GaussianFit, b: &GaussianFit) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::shape(
            "frechet_distance",
            format!("dimension {}", a.dim),
            format!("dimension {}", b.dim),
        ));
    }
    let k = a.dim;
    let mean_term: f64 = a
        .mean
        .iter()
        .zip(b.mean.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();

    let root_a = psd_sqrt(&a.covariance, k)?;
    // inner = root_a * cov_b * root_a, symmetrized against rounding drift
    let mut tmp = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let mut acc = 0.0;
            for l in 0..k {
                acc += root_a[i * k + l] * b.covariance[l * k + j];
            }
            tmp[i * k + j] = acc;
        }
    }
    let mut inner = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let mut acc = 0.0;
            for l in 0..k {
                acc += tmp[i * k + l] * root_a[l * k + j];
            }
            inner[i * k + j] = acc;
        }
    }
    for i in 0..k {
        for j in i + 1..k {
            let s = 0.5 * (inner[i * k + j] + inner[j * k + i]);
            inner[i * k + j] = s;
            inner[j * k + i] = s;
        }
    }
    let (inner_eigen, _) = symmetric_eigen(&inner, k)?;
    let trace_sqrt: f64 = inner_eigen.iter().map(|&l| l.max(0.0).sqrt()).sum();
    let trace_a: f64 = (0..k).map(|i| a.covariance[i * k + i]).sum();
    let trace_b: f64 = (0..k).map(|i| b.covariance[i * k + i]).sum();

    Ok((mean_term + trace_a + trace_b - 2.0 * trace_sqrt).max(0.0))
}

/// Proxy Frechet distance between real and generated samples.
///
/// Sample counts are matched by subsampling the larger set with a fixed seed
/// derived from the extractor seed; both sets are then projected by the
/// frozen random features and compared via [`frechet_distance`].
pub fn proxy_fid(real: &Tensor, fake: &Tensor, fe: &FeatureExtractor) -> Result<f64> {
    if real.cols() != fake.cols() {
        return Err(Error::shape(
            "proxy_fid",
            format!("{} columns", real.cols()),
            format!("{} columns", fake.cols()),
        ));
    }
    let count = real.rows().min(fake.rows());
    if count < 2 {
        return Err(Error::Input(
            "proxy_fid needs at least 2 samples on each side".into(),
        ));
    }
    if count < fe.feature_dim + 1 {
        log::warn!(
            "proxy_fid: {count} matched samples is below feature_dim + 1 = {}; \
             moment estimates will be rank deficient",
            fe.feature_dim + 1
        );
    }
    let real_matched = subsample(real, count, fe.seed ^ 0x7265616c)?;
    let fake_matched = subsample(fake, count, fe.seed ^ 0x66616b65)?;
    let fit_real = fit_gaussian(&extract_features(fe, &real_matched)?)?;
    let fit_fake = fit_gaussian(&extract_features(fe, &fake_matched)?)?;
    frechet_distance(&fit_real, &fit_fake)
}

fn subsample(t: &Tensor, count: usize, seed: u64) -> Result<Tensor> {
    if t.rows() == count {
        return Ok(t.clone());
    }
    let mut indices: Vec<usize> = (0..t.rows()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // partial Fisher-Yates: the first `count` entries become the sample
    for i in 0..count {
        let j = i + rng.gen_range(0..indices.len() - i);
        indices.swap(i, j);
    }
    let mut chosen = indices[..count].to_vec();
    chosen.sort_unstable();
    t.gather_rows(&chosen)
}
