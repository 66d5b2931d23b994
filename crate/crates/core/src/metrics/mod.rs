//! Training losses and evaluation metrics.

mod features;
mod linalg;
mod loss;
mod ssim;

pub use features::{
    extract_features, fit_gaussian, frechet_distance, proxy_fid, FeatureExtractor, GaussianFit,
};
pub use loss::{loss, loss_grad, LossKind, LossSpec};
pub use ssim::{ssim, ssim_grad};
