//! Sobol low-discrepancy sequence with a seeded digital shift.
//!
//! Direction numbers follow the Joe-Kuo parameterization for the first 32
//! dimensions. Points are enumerated in Gray-code order starting after the
//! all-zeros point, so the first one-dimensional values are
//! 0.5, 0.75, 0.25, 0.375, ...
//!
//! "Scrambling" is realized as a per-dimension digital shift: the 32-bit
//! integer coordinate is XORed with seeded random bits before scaling into
//! (0, 1). Shift zero reproduces the base sequence exactly.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensorcore::Tensor;

/// Highest supported dimension.
pub const SOBOL_MAX_DIMENSION: usize = 32;

const BITS: u32 = 32;

/// Primitive polynomials (Joe-Kuo), one per dimension. Bit i of the value
/// encodes the coefficient of x^i; dimension 0 is the van der Corput sequence.
const SOBOL_POLY: [u32; 32] = [
    1, 3, 7, 11, 13, 19, 25, 37, 41, 47, 55, 59, 61, 67, 91, 97, 103, 109, 115, 131, 137, 143,
    145, 157, 167, 171, 185, 191, 193, 203, 211, 213,
];

/// Initial direction values m_k per dimension (Joe-Kuo table); entries beyond
/// the polynomial degree are filled by the recurrence.
const SOBOL_M_INIT: [[u32; 8]; 32] = [
    [1, 0, 0, 0, 0, 0, 0, 0],
    [1, 0, 0, 0, 0, 0, 0, 0],
    [1, 3, 0, 0, 0, 0, 0, 0],
    [1, 3, 1, 0, 0, 0, 0, 0],
    [1, 1, 1, 0, 0, 0, 0, 0],
    [1, 1, 3, 3, 0, 0, 0, 0],
    [1, 3, 5, 13, 0, 0, 0, 0],
    [1, 1, 5, 5, 17, 0, 0, 0],
    [1, 1, 5, 5, 5, 0, 0, 0],
    [1, 1, 7, 11, 19, 0, 0, 0],
    [1, 1, 5, 1, 1, 0, 0, 0],
    [1, 1, 1, 3, 11, 0, 0, 0],
    [1, 3, 5, 5, 31, 0, 0, 0],
    [1, 3, 3, 9, 7, 49, 0, 0],
    [1, 1, 1, 15, 21, 21, 0, 0],
    [1, 3, 1, 13, 27, 49, 0, 0],
    [1, 1, 1, 15, 7, 5, 0, 0],
    [1, 3, 1, 15, 13, 25, 0, 0],
    [1, 1, 5, 5, 19, 61, 0, 0],
    [1, 3, 7, 11, 23, 15, 103, 0],
    [1, 3, 7, 13, 13, 15, 69, 0],
    [1, 1, 3, 13, 7, 35, 63, 0],
    [1, 3, 5, 9, 1, 25, 53, 0],
    [1, 3, 1, 13, 9, 35, 107, 0],
    [1, 3, 1, 5, 27, 61, 31, 0],
    [1, 1, 5, 11, 19, 41, 61, 0],
    [1, 3, 5, 3, 3, 13, 69, 0],
    [1, 1, 7, 13, 1, 19, 1, 0],
    [1, 3, 7, 5, 13, 19, 59, 0],
    [1, 1, 3, 9, 25, 29, 41, 0],
    [1, 3, 5, 13, 23, 1, 55, 0],
    [1, 3, 7, 3, 13, 59, 17, 0],
];

/// Direction integers V_k = m_k << (32 - k) for one dimension.
fn direction_integers(dim: usize) -> [u32; BITS as usize] {
    let mut m = [0u32; BITS as usize + 1]; // 1-indexed
    if dim == 0 {
        for k in 1..=BITS as usize {
            m[k] = 1;
        }
    } else {
        let poly = SOBOL_POLY[dim];
        let degree = (32 - poly.leading_zeros() - 1) as usize;
        for k in 1..=degree {
            m[k] = SOBOL_M_INIT[dim][k - 1];
        }
        for k in degree + 1..=BITS as usize {
            let mut new_m = m[k - degree] ^ (m[k - degree] << degree);
            for j in 1..degree {
                if (poly >> (degree - j)) & 1 == 1 {
                    new_m ^= m[k - j] << j;
                }
            }
            m[k] = new_m;
        }
    }
    let mut v = [0u32; BITS as usize];
    for k in 1..=BITS as usize {
        v[k - 1] = m[k] << (BITS as usize - k);
    }
    v
}

/// Incremental digital-shifted Sobol generator.
pub struct SobolSequence {
    directions: Vec<[u32; BITS as usize]>,
    shift: Vec<u32>,
    state: Vec<u32>,
    index: u32,
}

impl SobolSequence {
    /// A generator for `dimension` coordinates; `seed` drives the digital
    /// shift (seed-independent base sequence is not exposed; shift bits are a
    /// pure function of the seed, and any fixed seed is reproducible).
    pub fn new(dimension: usize, seed: u64) -> Result<Self> {
        if dimension == 0 || dimension > SOBOL_MAX_DIMENSION {
            return Err(Error::Domain(format!(
                "sobol dimension must be in 1..={SOBOL_MAX_DIMENSION}, got {dimension}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift: Vec<u32> = (0..dimension).map(|_| rng.gen::<u32>()).collect();
        Ok(SobolSequence {
            directions: (0..dimension).map(direction_integers).collect(),
            shift,
            state: vec![0; dimension],
            index: 0,
        })
    }

    pub fn dimension(&self) -> usize {
        self.state.len()
    }

    /// Next point, with every coordinate strictly inside (0, 1).
    pub fn next_point(&mut self, out: &mut [f64]) -> Result<()> {
        if self.index == u32::MAX {
            return Err(Error::Capacity("sobol sequence exhausted (2^32 points)".into()));
        }
        self.index += 1;
        let c = self.index.trailing_zeros() as usize;
        let scale = (2.0f64).powi(-(BITS as i32));
        for (j, x) in self.state.iter_mut().enumerate() {
            *x ^= self.directions[j][c];
            let w = *x ^ self.shift[j];
            // fold the single zero word into the open interval
            out[j] = if w == 0 {
                0.5 * scale
            } else {
                w as f64 * scale
            };
        }
        Ok(())
    }
}

/// First `n` points of the digital-shifted Sobol sequence as an `n x d`
/// tensor. Deterministic in `(d, n, seed)`.
pub fn sobol_points(d: usize, n: usize, seed: u64) -> Result<Tensor> {
    if n == 0 {
        return Err(Error::Domain("sobol_points requires n >= 1".into()));
    }
    let mut seq = SobolSequence::new(d, seed)?;
    let mut data = vec![0.0; n * d];
    for row in data.chunks_mut(d) {
        seq.next_point(row)?;
    }
    Tensor::matrix(n, d, data)
}
