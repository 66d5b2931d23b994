//! Quantile lattices for the supported priors.
//!
//! A lattice is a fixed set of n points discretizing the prior: inverse-CDF
//! quantiles in one dimension, low-discrepancy (Sobol) or product-grid points
//! pushed through the prior in higher dimensions.

mod lattice;
mod normal;
mod sobol;

pub use lattice::{
    build_lattice, to_gaussian, to_uniform_ball, uniform_grid_points, univariate_quantiles,
    Lattice, LatticeSource, PriorKind, PriorSpec,
};
pub use normal::{normal_cdf, normal_quantile};
pub use sobol::{sobol_points, SobolSequence, SOBOL_MAX_DIMENSION};
