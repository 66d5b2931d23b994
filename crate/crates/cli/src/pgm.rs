//! Binary (P5) PGM dumps of sample grids for quick visual inspection.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nsql_core::tensorcore::Tensor;
use nsql_core::{Error, Result};

/// Writes grayscale samples (rows of an `n x (h*w)` tensor) as one PGM image
/// arranged in a near-square grid. Values are clamped to [0,1] and quantized
/// to 8 bits.
pub fn write_pgm_grid(path: &Path, samples: &Tensor, height: usize, width: usize) -> Result<()> {
    let n = samples.rows();
    if samples.cols() != height * width {
        return Err(Error::shape(
            "write_pgm_grid",
            format!("{} pixels", height * width),
            format!("{} columns", samples.cols()),
        ));
    }
    let grid_cols = (n as f64).sqrt().ceil() as usize;
    let grid_rows = n.div_ceil(grid_cols);
    let (out_h, out_w) = (grid_rows * height, grid_cols * width);
    let mut pixels = vec![0u8; out_h * out_w];
    for (i, _) in (0..n).enumerate() {
        let (gr, gc) = (i / grid_cols, i % grid_cols);
        let sample = samples.row(i);
        for r in 0..height {
            for c in 0..width {
                let v = sample[r * width + c].clamp(0.0, 1.0);
                pixels[(gr * height + r) * out_w + gc * width + c] = (v * 255.0).round() as u8;
            }
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{out_w} {out_h}\n255\n")?;
    w.write_all(&pixels)?;
    w.flush()?;
    Ok(())
}
