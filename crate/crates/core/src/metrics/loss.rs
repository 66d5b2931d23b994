use crate::error::{Error, Result};
use crate::metrics::ssim::{ssim_grad, ssim_with, SsimConfig};

/// Loss family used for both decoder regression and assignment costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Mean squared difference.
    L2,
    /// Mean absolute difference.
    L1,
    /// Perceptual, scale-stable loss: (1 - SSIM)/2 + mean|x - y|/2.
    SsimL1,
}

/// Loss configuration. `image_shape` (height, width, channels) is required
/// for [`LossKind::SsimL1`] and must satisfy height, width >= window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub image_shape: Option<(usize, usize, usize)>,
    pub window: usize,
    pub data_range: f64,
}

impl LossSpec {
    pub fn l2() -> Self {
        LossSpec {
            kind: LossKind::L2,
            image_shape: None,
            window: 7,
            data_range: 1.0,
        }
    }

    pub fn l1() -> Self {
        LossSpec {
            kind: LossKind::L1,
            ..LossSpec::l2()
        }
    }

    pub fn ssim_l1(image_shape: (usize, usize, usize), window: usize, data_range: f64) -> Self {
        LossSpec {
            kind: LossKind::SsimL1,
            image_shape: Some(image_shape),
            window,
            data_range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.data_range > 0.0) {
            return Err(Error::Config(format!(
                "loss data range must be positive, got {}",
                self.data_range
            )));
        }
        if self.kind == LossKind::SsimL1 {
            let shape = self.image_shape.ok_or_else(|| {
                Error::Config("ssim_l1 loss requires an image shape".into())
            })?;
            SsimConfig::new(shape, self.window, self.data_range)?;
        }
        Ok(())
    }

    fn ssim_config(&self) -> Result<SsimConfig> {
        let shape = self
            .image_shape
            .ok_or_else(|| Error::Config("ssim_l1 loss requires an image shape".into()))?;
        SsimConfig::new(shape, self.window, self.data_range)
    }

    fn check_lengths(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::shape(
                "loss",
                format!("two non-empty vectors of equal length"),
                format!("{} and {}", x.len(), y.len()),
            ));
        }
        if let Some((h, w, c)) = self.image_shape {
            if self.kind == LossKind::SsimL1 && x.len() != h * w * c {
                return Err(Error::shape(
                    "loss",
                    format!("{} pixels for shape ({h},{w},{c})", h * w * c),
                    format!("{}", x.len()),
                ));
            }
        }
        Ok(())
    }
}

fn mean_sq(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        let d = a - b;
        acc += d * d;
    }
    acc / x.len() as f64
}

fn mean_abs(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        acc += (a - b).abs();
    }
    acc / x.len() as f64
}

/// Nonnegative loss between a prediction `x` and a target `y`.
pub fn loss(spec: &LossSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.check_lengths(x, y)?;
    let value = match spec.kind {
        LossKind::L2 => mean_sq(x, y),
        LossKind::L1 => mean_abs(x, y),
        LossKind::SsimL1 => {
            let cfg = spec.ssim_config()?;
            let s = ssim_with(x, y, &cfg)?;
            // clamp rounding residue so assignment costs stay nonnegative
            (0.5 * (1.0 - s) + 0.5 * mean_abs(x, y)).max(0.0)
        }
    };
    if !value.is_finite() {
        return Err(Error::Numeric("loss evaluated to a non-finite value".into()));
    }
    Ok(value)
}

/// Loss value plus its gradient with respect to the prediction `x`.
pub fn loss_grad(spec: &LossSpec, x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    spec.check_lengths(x, y)?;
    let p = x.len() as f64;
    match spec.kind {
        LossKind::L2 => {
            let grad = x
                .iter()
                .zip(y.iter())
                .map(|(a, b)| 2.0 * (a - b) / p)
                .collect();
            Ok((mean_sq(x, y), grad))
        }
        LossKind::L1 => {
            let grad = x
                .iter()
                .zip(y.iter())
                .map(|(a, b)| (a - b).signum() * if a == b { 0.0 } else { 1.0 } / p)
                .collect();
            Ok((mean_abs(x, y), grad))
        }
        LossKind::SsimL1 => {
            let shape = spec
                .image_shape
                .ok_or_else(|| Error::Config("ssim_l1 loss requires an image shape".into()))?;
            let (s, ds) = ssim_grad(x, y, shape, spec.window, spec.data_range)?;
            let mut grad: Vec<f64> = ds.iter().map(|g| -0.5 * g).collect();
            for (i, (a, b)) in x.iter().zip(y.iter()).enumerate() {
                if a != b {
                    grad[i] += 0.5 * (a - b).signum() / p;
                }
            }
            Ok(((0.5 * (1.0 - s) + 0.5 * mean_abs(x, y)).max(0.0), grad))
        }
    }
}
