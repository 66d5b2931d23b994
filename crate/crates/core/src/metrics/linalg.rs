//! Symmetric eigendecomposition by cyclic Jacobi rotations.
//!
//! Adequate for the covariance sizes used by the proxy Frechet metric
//! (feature dimensions up to a few hundred), fully deterministic.

use crate::error::{Error, Result};

/// Returns (eigenvalues, eigenvectors); eigenvectors are stored row-major,
/// one eigenvector per row, paired with the eigenvalue of the same index.
pub(crate) fn symmetric_eigen(matrix: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if matrix.len() != n * n {
        return Err(Error::shape(
            "symmetric_eigen",
            format!("{n}x{n} matrix"),
            format!("{} entries", matrix.len()),
        ));
    }
    let mut a = matrix.to_vec();
    // v starts as identity; accumulated rotations give the eigenvectors
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let tol = 1e-14 * scale;
    const MAX_SWEEPS: usize = 100;

    for sweep in 0..=MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        if sweep == MAX_SWEEPS {
            return Err(Error::Numeric(
                "jacobi eigensolver failed to converge".into(),
            ));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vpk = v[p * n + k];
                    let vqk = v[q * n + k];
                    v[p * n + k] = c * vpk - s * vqk;
                    v[q * n + k] = s * vpk + c * vqk;
                }
            }
        }
    }

    let eigenvalues: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    Ok((eigenvalues, v))
}

/// Symmetric square root of a PSD matrix; negative eigenvalues (rounding
/// residue) are clamped to zero.
pub(crate) fn psd_sqrt(matrix: &[f64], n: usize) -> Result<Vec<f64>> {
    let (eigenvalues, vectors) = symmetric_eigen(matrix, n)?;
    let roots: Vec<f64> = eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    // V^T diag(sqrt(l)) V with eigenvectors as rows
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += vectors[k * n + i] * roots[k] * vectors[k * n + j];
            }
            out[i * n + j] = acc;
            out[j * n + i] = acc;
        }
    }
    Ok(out)
}
