//! Structural similarity with a uniform box window.
//!
//! Mean over all sliding windows (stride 1, valid padding, per channel) of
//! the standard SSIM kernel with C1 = (0.01 L)^2, C2 = (0.03 L)^2. Window
//! statistics come from summed-area tables; variance and covariance share one
//! code path so that ssim(x, x) evaluates to exactly 1 and the result is
//! bitwise symmetric in its arguments.

use crate::error::{Error, Result};

pub(crate) struct SsimConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub window: usize,
    pub c1: f64,
    pub c2: f64,
}

impl SsimConfig {
    pub fn new(shape: (usize, usize, usize), window: usize, data_range: f64) -> Result<Self> {
        let (height, width, channels) = shape;
        if window % 2 == 0 || window == 0 {
            return Err(Error::Config(format!(
                "ssim window must be odd and positive, got {window}"
            )));
        }
        if window > height.min(width) {
            return Err(Error::Config(format!(
                "ssim window {window} exceeds image side min({height},{width})"
            )));
        }
        if !(data_range > 0.0) {
            return Err(Error::Config(format!(
                "ssim data range must be positive, got {data_range}"
            )));
        }
        Ok(SsimConfig {
            height,
            width,
            channels,
            window,
            c1: (0.01 * data_range) * (0.01 * data_range),
            c2: (0.03 * data_range) * (0.03 * data_range),
        })
    }

    fn pixels(&self) -> usize {
        self.height * self.width * self.channels
    }

    fn windows_per_channel(&self) -> usize {
        (self.height - self.window + 1) * (self.width - self.window + 1)
    }
}

/// Summed-area table over one channel plane; `at` returns the rectangle sum.
struct Sat {
    width: usize,
    table: Vec<f64>,
}

impl Sat {
    /// `value(r, c)` supplies the plane entry at row r, column c.
    fn build(height: usize, width: usize, value: impl Fn(usize, usize) -> f64) -> Sat {
        let w1 = width + 1;
        let mut table = vec![0.0; (height + 1) * w1];
        for r in 0..height {
            let mut row_acc = 0.0;
            for c in 0..width {
                row_acc += value(r, c);
                table[(r + 1) * w1 + (c + 1)] = table[r * w1 + (c + 1)] + row_acc;
            }
        }
        Sat { width: w1, table }
    }

    fn rect(&self, r0: usize, c0: usize, k: usize) -> f64 {
        let (r1, c1) = (r0 + k, c0 + k);
        self.table[r1 * self.width + c1] - self.table[r0 * self.width + c1]
            - self.table[r1 * self.width + c0]
            + self.table[r0 * self.width + c0]
    }
}

fn channel_plane<'a>(data: &'a [f64], cfg: &SsimConfig, ch: usize) -> impl Fn(usize, usize) -> f64 + 'a {
    let (w, c) = (cfg.width, cfg.channels);
    move |r, col| data[(r * w + col) * c + ch]
}

struct WindowStats {
    mu_x: f64,
    mu_y: f64,
    var_x: f64,
    var_y: f64,
    cov: f64,
}

fn for_each_window(
    x: &[f64],
    y: &[f64],
    cfg: &SsimConfig,
    mut visit: impl FnMut(usize, usize, usize, &WindowStats),
) {
    let k = cfg.window;
    let area = (k * k) as f64;
    for ch in 0..cfg.channels {
        let px = channel_plane(x, cfg, ch);
        let py = channel_plane(y, cfg, ch);
        let sx = Sat::build(cfg.height, cfg.width, &px);
        let sy = Sat::build(cfg.height, cfg.width, &py);
        let sxx = Sat::build(cfg.height, cfg.width, |r, c| px(r, c) * px(r, c));
        let syy = Sat::build(cfg.height, cfg.width, |r, c| py(r, c) * py(r, c));
        let sxy = Sat::build(cfg.height, cfg.width, |r, c| px(r, c) * py(r, c));
        for r0 in 0..=cfg.height - k {
            for c0 in 0..=cfg.width - k {
                let mu_x = sx.rect(r0, c0, k) / area;
                let mu_y = sy.rect(r0, c0, k) / area;
                // variance and covariance share the same expression shape so
                // x == y collapses them to identical values
                let var_x = sxx.rect(r0, c0, k) / area - mu_x * mu_x;
                let var_y = syy.rect(r0, c0, k) / area - mu_y * mu_y;
                let cov = sxy.rect(r0, c0, k) / area - mu_x * mu_y;
                visit(
                    ch,
                    r0,
                    c0,
                    &WindowStats {
                        mu_x,
                        mu_y,
                        var_x,
                        var_y,
                        cov,
                    },
                );
            }
        }
    }
}

fn kernel(s: &WindowStats, cfg: &SsimConfig) -> f64 {
    let num = (2.0 * s.mu_x * s.mu_y + cfg.c1) * (2.0 * s.cov + cfg.c2);
    let den = (s.mu_x * s.mu_x + s.mu_y * s.mu_y + cfg.c1) * (s.var_x + s.var_y + cfg.c2);
    num / den
}

pub(crate) fn ssim_with(x: &[f64], y: &[f64], cfg: &SsimConfig) -> Result<f64> {
    if x.len() != cfg.pixels() || y.len() != cfg.pixels() {
        return Err(Error::shape(
            "ssim",
            format!("{} pixels", cfg.pixels()),
            format!("{} and {}", x.len(), y.len()),
        ));
    }
    let mut total = 0.0;
    for_each_window(x, y, cfg, |_, _, _, s| total += kernel(s, cfg));
    Ok(total / (cfg.windows_per_channel() * cfg.channels) as f64)
}

/// Mean SSIM between two images of the given `(height, width, channels)`
/// shape, stored row-major with channel-last layout.
pub fn ssim(
    x: &[f64],
    y: &[f64],
    shape: (usize, usize, usize),
    window: usize,
    data_range: f64,
) -> Result<f64> {
    let cfg = SsimConfig::new(shape, window, data_range)?;
    ssim_with(x, y, &cfg)
}

/// SSIM value plus its gradient with respect to `x`.
pub fn ssim_grad(
    x: &[f64],
    y: &[f64],
    shape: (usize, usize, usize),
    window: usize,
    data_range: f64,
) -> Result<(f64, Vec<f64>)> {
    let cfg = SsimConfig::new(shape, window, data_range)?;
    if x.len() != cfg.pixels() || y.len() != cfg.pixels() {
        return Err(Error::shape(
            "ssim_grad",
            format!("{} pixels", cfg.pixels()),
            format!("{} and {}", x.len(), y.len()),
        ));
    }
    let k = cfg.window;
    let area = (k * k) as f64;
    let n_windows = (cfg.windows_per_channel() * cfg.channels) as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; x.len()];
    for_each_window(x, y, &cfg, |ch, r0, c0, s| {
        let a = 2.0 * s.mu_x * s.mu_y + cfg.c1;
        let b = 2.0 * s.cov + cfg.c2;
        let c = s.mu_x * s.mu_x + s.mu_y * s.mu_y + cfg.c1;
        let d = s.var_x + s.var_y + cfg.c2;
        let value = (a * b) / (c * d);
        total += value;
        // d(value)/dx_p = 2/(area*C*D) * (mu_y*B + A*(y_p - mu_y))
        //                 - 2*value/area * (mu_x/C + (x_p - mu_x)/D)
        let f1 = 2.0 / (area * c * d);
        let f2 = 2.0 * value / area;
        for dr in 0..k {
            for dc in 0..k {
                let idx = ((r0 + dr) * cfg.width + (c0 + dc)) * cfg.channels + ch;
                let xp = x[idx];
                let yp = y[idx];
                grad[idx] += (f1 * (s.mu_y * b + a * (yp - s.mu_y))
                    - f2 * (s.mu_x / c + (xp - s.mu_x) / d))
                    / n_windows;
            }
        }
    });
    Ok((total / n_windows, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noise_image(seed: u64, len: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen::<f64>()).collect()
    }

    #[test]
    fn self_similarity_is_exactly_one() {
        for seed in 0..5 {
            let x = noise_image(seed, 8 * 8);
            let s = ssim(&x, &x, (8, 8, 1), 7, 1.0).unwrap();
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn constant_images_reduce_to_luminance_term() {
        // zero variance: SSIM = (2ab + C1) / (a^2 + b^2 + C1)
        let (a, b) = (0.3, 0.8);
        let x = vec![a; 7 * 7];
        let y = vec![b; 7 * 7];
        let c1 = 0.01f64 * 0.01;
        let expected = (2.0 * a * b + c1) / (a * a + b * b + c1);
        let s = ssim(&x, &y, (7, 7, 1), 7, 1.0).unwrap();
        assert!((s - expected).abs() < 1e-12, "{s} vs {expected}");
    }

    /// Brute-force per-window evaluation with direct loops, no summed-area
    /// tables, as an independent route.
    fn ssim_brute(x: &[f64], y: &[f64], h: usize, w: usize, k: usize, l: f64) -> f64 {
        let c1 = (0.01 * l) * (0.01 * l);
        let c2 = (0.03 * l) * (0.03 * l);
        let area = (k * k) as f64;
        let mut total = 0.0;
        let mut count = 0usize;
        for r0 in 0..=h - k {
            for c0 in 0..=w - k {
                let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for r in r0..r0 + k {
                    for c in c0..c0 + k {
                        let (xv, yv) = (x[r * w + c], y[r * w + c]);
                        sx += xv;
                        sy += yv;
                        sxx += xv * xv;
                        syy += yv * yv;
                        sxy += xv * yv;
                    }
                }
                let mx = sx / area;
                let my = sy / area;
                let vx = sxx / area - mx * mx;
                let vy = syy / area - my * my;
                let cov = sxy / area - mx * my;
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn matches_per_window_oracle() {
        let x = noise_image(10, 12 * 9);
        let y = noise_image(11, 12 * 9);
        let fast = ssim(&x, &y, (12, 9, 1), 7, 1.0).unwrap();
        let slow = ssim_brute(&x, &y, 12, 9, 7, 1.0);
        assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
    }

    #[test]
    fn symmetric_bitwise() {
        for seed in 0..1000u64 {
            let x = noise_image(2 * seed, 8 * 8);
            let y = noise_image(2 * seed + 1, 8 * 8);
            let a = ssim(&x, &y, (8, 8, 1), 7, 1.0).unwrap();
            let b = ssim(&y, &x, (8, 8, 1), 7, 1.0).unwrap();
            assert_eq!(a.to_bits(), b.to_bits(), "seed {seed}");
        }
    }

    #[test]
    fn range_bounded() {
        for seed in 0..1000u64 {
            let x = noise_image(3 * seed, 8 * 8);
            let y = noise_image(3 * seed + 2, 8 * 8);
            let s = ssim(&x, &y, (8, 8, 1), 7, 1.0).unwrap();
            assert!((-1.0..=1.0 + 1e-12).contains(&s), "seed {seed}: {s}");
        }
    }

    #[test]
    fn window_larger_than_image_is_rejected() {
        let x = vec![0.0; 5 * 5];
        assert!(ssim(&x, &x, (5, 5, 1), 7, 1.0).is_err());
    }

    #[test]
    fn multichannel_averages_planes() {
        // two identical channels must give the same value as one
        let x1 = noise_image(20, 8 * 8);
        let y1 = noise_image(21, 8 * 8);
        let mut x2 = Vec::with_capacity(2 * x1.len());
        let mut y2 = Vec::with_capacity(2 * y1.len());
        for i in 0..x1.len() {
            x2.extend_from_slice(&[x1[i], x1[i]]);
            y2.extend_from_slice(&[y1[i], y1[i]]);
        }
        let a = ssim(&x1, &y1, (8, 8, 1), 7, 1.0).unwrap();
        let b = ssim(&x2, &y2, (8, 8, 2), 7, 1.0).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = noise_image(30, 9 * 9);
        let y = noise_image(31, 9 * 9);
        let shape = (9, 9, 1);
        let (_, grad) = ssim_grad(&x, &y, shape, 7, 1.0).unwrap();
        let h = 1e-6;
        let mut max_rel: f64 = 0.0;
        for p in (0..x.len()).step_by(7) {
            let mut xp = x.clone();
            xp[p] += h;
            let plus = ssim(&xp, &y, shape, 7, 1.0).unwrap();
            xp[p] -= 2.0 * h;
            let minus = ssim(&xp, &y, shape, 7, 1.0).unwrap();
            let numeric = (plus - minus) / (2.0 * h);
            let denom = grad[p].abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max((grad[p] - numeric).abs() / denom);
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }
}
