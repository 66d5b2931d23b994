use crate::error::{Error, Result};
use crate::prior::normal::normal_quantile;
use crate::prior::sobol::sobol_points;
use crate::tensorcore::Tensor;

/// Latent prior family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    /// Independent U(0,1) coordinates.
    Uniform01,
    /// Independent standard normal coordinates.
    StandardGaussian,
    /// Uniform distribution on the open unit ball.
    UniformBall,
}

/// A prior together with its latent dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PriorSpec {
    pub kind: PriorKind,
    pub dim: usize,
}

impl PriorSpec {
    pub fn new(kind: PriorKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("prior dimension must be >= 1".into()));
        }
        Ok(PriorSpec { kind, dim })
    }
}

/// How the lattice grid is generated before the prior pushforward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticeSource {
    /// Inverse-CDF quantiles at i/(n+1); one-dimensional priors only.
    UnivariateQuantiles,
    /// Digital-shifted Sobol points.
    Sobol,
    /// Product grid of per-axis quantiles; requires n to be a perfect d-th power.
    UniformGrid,
}

impl LatticeSource {
    pub fn name(&self) -> &'static str {
        match self {
            LatticeSource::UnivariateQuantiles => "univariate_quantiles",
            LatticeSource::Sobol => "sobol",
            LatticeSource::UniformGrid => "uniform_grid",
        }
    }
}

/// The fixed quantile grid: n rows of d-dimensional prior quantiles.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub points: Tensor,
    pub prior: PriorSpec,
    pub source: LatticeSource,
    pub seed: u64,
}

impl Lattice {
    fn validated(
        points: Tensor,
        prior: PriorSpec,
        source: LatticeSource,
        seed: u64,
    ) -> Result<Self> {
        let n = points.rows();
        let d = points.cols();
        if n == 0 {
            return Err(Error::Config("lattice needs at least one row".into()));
        }
        if d != prior.dim {
            return Err(Error::shape(
                "Lattice",
                format!("{} columns", prior.dim),
                format!("{d} columns"),
            ));
        }
        match prior.kind {
            PriorKind::Uniform01 => {
                if points.data().iter().any(|&v| v <= 0.0 || v >= 1.0) {
                    return Err(Error::Domain(
                        "uniform01 lattice rows must lie strictly inside (0,1)^d".into(),
                    ));
                }
            }
            PriorKind::UniformBall => {
                for i in 0..n {
                    let norm2: f64 = points.row(i).iter().map(|v| v * v).sum();
                    if norm2 >= 1.0 {
                        return Err(Error::Domain(format!(
                            "uniform ball lattice row {i} has norm >= 1"
                        )));
                    }
                }
            }
            PriorKind::StandardGaussian => {}
        }
        if has_duplicate_rows(&points) {
            return Err(Error::Domain("lattice rows must be pairwise distinct".into()));
        }
        Ok(Lattice {
            points,
            prior,
            source,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.points.rows()
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }
}

/// Exact duplicate detection by sorting bit patterns, O(n log n).
fn has_duplicate_rows(points: &Tensor) -> bool {
    let n = points.rows();
    let mut keys: Vec<Vec<u64>> = (0..n)
        .map(|i| points.row(i).iter().map(|v| v.to_bits()).collect())
        .collect();
    keys.sort_unstable();
    keys.windows(2).any(|w| w[0] == w[1])
}

/// Univariate quantile lattice: row i (1-based) is F^{-1}(i/(n+1)).
pub fn univariate_quantiles(prior: PriorSpec, n: usize) -> Result<Lattice> {
    if prior.dim != 1 {
        return Err(Error::Domain(format!(
            "univariate quantiles require d == 1, got d = {}",
            prior.dim
        )));
    }
    if n == 0 {
        return Err(Error::Config("lattice needs at least one row".into()));
    }
    let mut data = Vec::with_capacity(n);
    for i in 1..=n {
        let u = i as f64 / (n as f64 + 1.0);
        let q = match prior.kind {
            PriorKind::Uniform01 => u,
            PriorKind::StandardGaussian => normal_quantile(u)?,
            PriorKind::UniformBall => 2.0 * u - 1.0,
        };
        data.push(q);
    }
    Lattice::validated(
        Tensor::matrix(n, 1, data)?,
        prior,
        LatticeSource::UnivariateQuantiles,
        0,
    )
}

/// Coordinatewise inverse standard-normal CDF of points in (0,1)^d.
pub fn to_gaussian(points: &Tensor) -> Result<Tensor> {
    let mut data = Vec::with_capacity(points.len());
    for &u in points.data() {
        data.push(normal_quantile(u)?);
    }
    Tensor::new(points.shape().to_vec(), data)
}

/// Maps unit-cube points onto the open unit ball.
///
/// With a single input column the 1-ball degenerates to the interval map
/// 2u - 1. With m >= 2 columns the output dimension is d = m - 1: the first
/// d coordinates become a Gaussian direction via the inverse normal CDF
/// (normalized to unit length) and the last coordinate sets the radius
/// u^(1/d), which makes the pushforward converge to the uniform law on the
/// ball.
pub fn to_uniform_ball(points: &Tensor) -> Result<Tensor> {
    let m = points.cols();
    let n = points.rows();
    if m == 1 {
        let mut data = Vec::with_capacity(n);
        for &u in points.data() {
            if u <= 0.0 || u >= 1.0 {
                return Err(Error::Domain(format!(
                    "ball map requires coordinates in (0,1), got {u}"
                )));
            }
            data.push(2.0 * u - 1.0);
        }
        return Tensor::matrix(n, 1, data);
    }
    let d = m - 1;
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        let row = points.row(i);
        let mut dir = Vec::with_capacity(d);
        for &u in &row[..d] {
            dir.push(normal_quantile(u)?);
        }
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(Error::Numeric(
                "ball map: degenerate direction vector".into(),
            ));
        }
        let u_r = row[d];
        if u_r <= 0.0 || u_r >= 1.0 {
            return Err(Error::Domain(format!(
                "ball map requires coordinates in (0,1), got {u_r}"
            )));
        }
        let radius = u_r.powf(1.0 / d as f64);
        for v in dir {
            data.push(radius * v / norm);
        }
    }
    Tensor::matrix(n, d, data)
}

/// Product grid of per-axis quantile levels (i+1)/(m+1); n must be m^d.
pub fn uniform_grid_points(d: usize, n: usize) -> Result<Tensor> {
    let m = side_length(d, n).ok_or_else(|| {
        Error::Config(format!(
            "uniform_grid requires n to be a perfect d-th power, got n = {n}, d = {d}"
        ))
    })?;
    let levels: Vec<f64> = (1..=m).map(|i| i as f64 / (m as f64 + 1.0)).collect();
    let mut data = Vec::with_capacity(n * d);
    let mut idx = vec![0usize; d];
    for _ in 0..n {
        for &j in idx.iter() {
            data.push(levels[j]);
        }
        // odometer increment, last axis fastest
        for axis in (0..d).rev() {
            idx[axis] += 1;
            if idx[axis] < m {
                break;
            }
            idx[axis] = 0;
        }
    }
    Tensor::matrix(n, d, data)
}

fn side_length(d: usize, n: usize) -> Option<usize> {
    if n == 0 {
        return None;
    }
    let mut m = (n as f64).powf(1.0 / d as f64).round() as usize;
    // guard against floating point rounding of the d-th root
    for cand in m.saturating_sub(1)..=m + 1 {
        if cand >= 1 && cand.pow(d as u32) == n {
            m = cand;
            return Some(m);
        }
    }
    None
}

fn invalid_combination(prior: &PriorSpec, source: LatticeSource) -> Error {
    Error::Config(format!(
        "unsupported (prior, source) combination: ({:?} d={}, {}); valid pairs: \
         any prior with source=univariate_quantiles and d=1; any prior with source=sobol \
         (d <= 32, uniform_ball d <= 31); uniform01/standard_gaussian with source=uniform_grid \
         (n a perfect d-th power); uniform_ball with source=uniform_grid only for d=1",
        prior.kind,
        prior.dim,
        source.name()
    ))
}

/// Builds the quantile lattice for a prior: grid points from the configured
/// source pushed through the prior transform.
pub fn build_lattice(
    prior: PriorSpec,
    n: usize,
    source: LatticeSource,
    seed: u64,
) -> Result<Lattice> {
    if prior.dim == 0 {
        return Err(Error::Config("prior dimension must be >= 1".into()));
    }
    let d = prior.dim;
    let points = match source {
        LatticeSource::UnivariateQuantiles => {
            if d != 1 {
                return Err(invalid_combination(&prior, source));
            }
            return univariate_quantiles(prior, n);
        }
        LatticeSource::Sobol => match prior.kind {
            PriorKind::Uniform01 => sobol_points(d, n, seed)?,
            PriorKind::StandardGaussian => to_gaussian(&sobol_points(d, n, seed)?)?,
            PriorKind::UniformBall => {
                let cols = if d == 1 { 1 } else { d + 1 };
                to_uniform_ball(&sobol_points(cols, n, seed)?)?
            }
        },
        LatticeSource::UniformGrid => match prior.kind {
            PriorKind::Uniform01 => uniform_grid_points(d, n)?,
            PriorKind::StandardGaussian => to_gaussian(&uniform_grid_points(d, n)?)?,
            PriorKind::UniformBall => {
                if d != 1 {
                    return Err(invalid_combination(&prior, source));
                }
                to_uniform_ball(&uniform_grid_points(1, n)?)?
            }
        },
    };
    Lattice::validated(points, prior, source, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_univariate_quantiles() {
        let prior = PriorSpec::new(PriorKind::Uniform01, 1).unwrap();
        let lat = univariate_quantiles(prior, 3).unwrap();
        assert_eq!(lat.points.data(), &[0.25, 0.5, 0.75]);
    }

    #[test]
    fn gaussian_median_for_single_point() {
        let prior = PriorSpec::new(PriorKind::StandardGaussian, 1).unwrap();
        let lat = univariate_quantiles(prior, 1).unwrap();
        assert_eq!(lat.points.data(), &[0.0]);
    }

    #[test]
    fn gaussian_quantiles_match_bisection_reference() {
        // Phi^-1 at 0.2/0.4/0.6/0.8, frozen from 40-digit arithmetic.
        let prior = PriorSpec::new(PriorKind::StandardGaussian, 1).unwrap();
        let lat = univariate_quantiles(prior, 4).unwrap();
        let expected = [
            -0.8416212335729142,
            -0.2533471031357998,
            0.2533471031357998,
            0.8416212335729142,
        ];
        for (got, want) in lat.points.data().iter().zip(expected.iter()) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn univariate_rows_strictly_increasing() {
        for kind in [
            PriorKind::Uniform01,
            PriorKind::StandardGaussian,
            PriorKind::UniformBall,
        ] {
            let prior = PriorSpec::new(kind, 1).unwrap();
            let lat = univariate_quantiles(prior, 17).unwrap();
            let d = lat.points.data();
            assert!(d.windows(2).all(|w| w[0] < w[1]), "{kind:?}");
        }
    }

    #[test]
    fn univariate_rejects_higher_dimension() {
        let prior = PriorSpec::new(PriorKind::Uniform01, 2).unwrap();
        assert!(matches!(
            univariate_quantiles(prior, 3),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn gaussian_map_center() {
        let pts = Tensor::matrix(1, 2, vec![0.5, 0.5]).unwrap();
        let g = to_gaussian(&pts).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0]);
    }

    #[test]
    fn gaussian_map_rejects_boundary() {
        let pts = Tensor::matrix(1, 1, vec![1.0]).unwrap();
        assert!(to_gaussian(&pts).is_err());
    }

    #[test]
    fn ball_map_interval_case() {
        let pts = Tensor::matrix(1, 1, vec![0.75]).unwrap();
        let b = to_uniform_ball(&pts).unwrap();
        assert_eq!(b.data(), &[0.5]);
    }

    #[test]
    fn ball_points_stay_inside_for_all_small_dims() {
        for d in 2..=8usize {
            let lat = build_lattice(
                PriorSpec::new(PriorKind::UniformBall, d).unwrap(),
                10_000,
                LatticeSource::Sobol,
                3,
            )
            .unwrap();
            for i in 0..lat.n() {
                let norm2: f64 = lat.points.row(i).iter().map(|v| v * v).sum();
                assert!(norm2 < 1.0, "d={d} row {i}");
            }
        }
    }

    #[test]
    fn ball_radius_mass_matches_area_ratio() {
        let lat = build_lattice(
            PriorSpec::new(PriorKind::UniformBall, 2).unwrap(),
            4096,
            LatticeSource::Sobol,
            0,
        )
        .unwrap();
        let inside = (0..lat.n())
            .filter(|&i| {
                let r = lat.points.row(i);
                r[0] * r[0] + r[1] * r[1] <= 0.25
            })
            .count();
        let frac = inside as f64 / 4096.0;
        assert!((frac - 0.25).abs() <= 0.02, "fraction {frac}");
    }

    #[test]
    fn quarter_disk_masses_converge() {
        // weak-convergence proxy: each axis-aligned quadrant of the disk
        // carries mass 0.25 within 3/sqrt(n)
        for n in [256usize, 1024, 4096] {
            let lat = build_lattice(
                PriorSpec::new(PriorKind::UniformBall, 2).unwrap(),
                n,
                LatticeSource::Sobol,
                1,
            )
            .unwrap();
            let mut counts = [0usize; 4];
            for i in 0..n {
                let r = lat.points.row(i);
                let q = (r[0] >= 0.0) as usize * 2 + (r[1] >= 0.0) as usize;
                counts[q] += 1;
            }
            let tol = 3.0 / (n as f64).sqrt();
            for c in counts {
                let frac = c as f64 / n as f64;
                assert!((frac - 0.25).abs() <= tol, "n={n}: fraction {frac}");
            }
        }
    }

    #[test]
    fn build_delegates_to_univariate() {
        let lat = build_lattice(
            PriorSpec::new(PriorKind::Uniform01, 1).unwrap(),
            3,
            LatticeSource::UnivariateQuantiles,
            9,
        )
        .unwrap();
        assert_eq!(lat.points.data(), &[0.25, 0.5, 0.75]);
    }

    #[test]
    fn build_gaussian_sobol_rows_distinct_finite() {
        let lat = build_lattice(
            PriorSpec::new(PriorKind::StandardGaussian, 2).unwrap(),
            8,
            LatticeSource::Sobol,
            0,
        )
        .unwrap();
        assert_eq!(lat.n(), 8);
        assert!(lat.points.data().iter().all(|v| v.is_finite()));
        for i in 0..8 {
            for j in i + 1..8 {
                assert_ne!(lat.points.row(i), lat.points.row(j));
            }
        }
    }

    #[test]
    fn build_ball_sobol_rows_distinct() {
        let lat = build_lattice(
            PriorSpec::new(PriorKind::UniformBall, 3).unwrap(),
            1000,
            LatticeSource::Sobol,
            1,
        )
        .unwrap();
        let mut min_dist = f64::INFINITY;
        for i in 0..lat.n() {
            for j in i + 1..lat.n() {
                let d2: f64 = lat
                    .points
                    .row(i)
                    .iter()
                    .zip(lat.points.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                min_dist = min_dist.min(d2.sqrt());
            }
        }
        assert!(min_dist > 0.0);
    }

    #[test]
    fn build_is_deterministic() {
        let prior = PriorSpec::new(PriorKind::StandardGaussian, 4).unwrap();
        let a = build_lattice(prior, 64, LatticeSource::Sobol, 5).unwrap();
        let b = build_lattice(prior, 64, LatticeSource::Sobol, 5).unwrap();
        assert_eq!(a.points.data(), b.points.data());
    }

    #[test]
    fn invalid_combination_lists_valid_pairs() {
        let err = build_lattice(
            PriorSpec::new(PriorKind::UniformBall, 2).unwrap(),
            9,
            LatticeSource::UniformGrid,
            0,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("valid pairs"), "{msg}");
    }

    #[test]
    fn uniform_grid_needs_perfect_power() {
        assert!(uniform_grid_points(2, 9).is_ok());
        assert!(uniform_grid_points(2, 10).is_err());
        let grid = uniform_grid_points(2, 4).unwrap();
        assert_eq!(
            grid.data(),
            &[
                1.0 / 3.0,
                1.0 / 3.0,
                1.0 / 3.0,
                2.0 / 3.0,
                2.0 / 3.0,
                1.0 / 3.0,
                2.0 / 3.0,
                2.0 / 3.0
            ]
        );
    }
}
