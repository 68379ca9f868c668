use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::HdcError;

/// Input conditioning applied before projection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Preprocess {
    Identity,
    /// `x -> gain * x / ||x||` (zero stays zero).
    UnitNorm { gain: f64 },
}

impl Preprocess {
    pub(crate) fn tag(&self) -> (u8, f64) {
        match *self {
            Preprocess::Identity => (0, 0.0),
            Preprocess::UnitNorm { gain } => (1, gain),
        }
    }

    pub(crate) fn from_tag(tag: u8, gain: f64) -> Option<Self> {
        match tag {
            0 => Some(Preprocess::Identity),
            1 => Some(Preprocess::UnitNorm { gain }),
            _ => None,
        }
    }
}

impl Default for Preprocess {
    fn default() -> Self {
        Preprocess::UnitNorm { gain: 1.0 }
    }
}

/// Random-projection encoder `H = cos(Bx + b) ⊙ sin(Bx)`.
///
/// `B` is `D×K` with i.i.d. standard normal entries and `b` is uniform on
/// `[0, 2π)`, both drawn from a ChaCha20 stream seeded by `seed` (B first,
/// row-major, then b).
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    input_dim: usize,
    hv_dim: usize,
    seed: u64,
    preprocess: Preprocess,
    /// `B` transposed: row `k` holds column `k` of `B`.
    columns: Vec<f64>,
    offset: Vec<f64>,
}

impl Encoder {
    pub fn new(input_dim: usize, hv_dim: usize, seed: u64) -> Self {
        Self::with_preprocess(input_dim, hv_dim, seed, Preprocess::default())
    }

    pub fn with_preprocess(input_dim: usize, hv_dim: usize, seed: u64, preprocess: Preprocess) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut columns = vec![0.0; input_dim * hv_dim];
        for d in 0..hv_dim {
            for k in 0..input_dim {
                columns[k * hv_dim + d] = rng.sample(StandardNormal);
            }
        }
        let offset = (0..hv_dim).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        Encoder { input_dim, hv_dim, seed, preprocess, columns, offset }
    }

    /// Builds an encoder from explicit `B` (row-major `D×K`) and `b`.
    pub fn from_matrix(projection: &[f64], offset: Vec<f64>, input_dim: usize, preprocess: Preprocess) -> Result<Self, HdcError> {
        let hv_dim = offset.len();
        if projection.len() != hv_dim * input_dim {
            return Err(HdcError::Dimension { expected: hv_dim * input_dim, found: projection.len() });
        }
        let mut columns = vec![0.0; input_dim * hv_dim];
        for d in 0..hv_dim {
            for k in 0..input_dim {
                columns[k * hv_dim + d] = projection[d * input_dim + k];
            }
        }
        Ok(Encoder { input_dim, hv_dim, seed: 0, preprocess, columns, offset })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hv_dim(&self) -> usize {
        self.hv_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn preprocess(&self) -> Preprocess {
        self.preprocess
    }

    /// Entry `B[d][k]`.
    pub fn projection(&self, d: usize, k: usize) -> f64 {
        self.columns[k * self.hv_dim + d]
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn encode(&self, x: &[f32]) -> Result<Vec<f64>, HdcError> {
        if x.len() != self.input_dim {
            return Err(HdcError::Dimension { expected: self.input_dim, found: x.len() });
        }
        let factor = match self.preprocess {
            Preprocess::Identity => 1.0,
            Preprocess::UnitNorm { gain } => {
                let norm = x.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
                if norm > 0.0 {
                    gain / norm
                } else {
                    0.0
                }
            }
        };
        let mut proj = vec![0.0f64; self.hv_dim];
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            let v = xk as f64 * factor;
            let col = &self.columns[k * self.hv_dim..(k + 1) * self.hv_dim];
            for (p, &c) in proj.iter_mut().zip(col) {
                *p += v * c;
            }
        }
        Ok(proj.iter().zip(&self.offset).map(|(&p, &b)| (p + b).cos() * p.sin()).collect())
    }

    /// Encodes a row-major batch of `K`-dimensional samples.
    pub fn encode_batch(&self, features: &[f32]) -> Result<Vec<Vec<f64>>, HdcError> {
        if features.len() % self.input_dim != 0 {
            return Err(HdcError::Dimension { expected: self.input_dim, found: features.len() % self.input_dim });
        }
        features.par_chunks(self.input_dim).map(|x| self.encode(x)).collect()
    }

    /// SHA-256 over the dimensions, seed, preprocessing and the exact bits of `B` and `b`.
    pub fn id(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"hehdc-encoder");
        h.update((self.input_dim as u64).to_le_bytes());
        h.update((self.hv_dim as u64).to_le_bytes());
        h.update(self.seed.to_le_bytes());
        let (tag, gain) = self.preprocess.tag();
        h.update([tag]);
        h.update(gain.to_le_bytes());
        for d in 0..self.hv_dim {
            for k in 0..self.input_dim {
                h.update(self.projection(d, k).to_le_bytes());
            }
        }
        for b in &self.offset {
            h.update(b.to_le_bytes());
        }
        h.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_gives_zero_vector() {
        let e = Encoder::new(16, 64, 1);
        assert!(e.encode(&[0.0; 16]).unwrap().iter().all(|&h| h == 0.0));
    }

    #[test]
    fn outputs_are_bounded_and_deterministic() {
        let e = Encoder::with_preprocess(8, 256, 2, Preprocess::Identity);
        let x: Vec<f32> = (0..8).map(|i| i as f32 - 3.5).collect();
        let h = e.encode(&x).unwrap();
        assert!(h.iter().all(|v| (-1.0..=1.0).contains(v)));
        let again = Encoder::with_preprocess(8, 256, 2, Preprocess::Identity).encode(&x).unwrap();
        assert_eq!(h, again);
        assert_eq!(e.id(), Encoder::with_preprocess(8, 256, 2, Preprocess::Identity).id());
        assert_ne!(e.id(), Encoder::with_preprocess(8, 256, 3, Preprocess::Identity).id());
    }

    #[test]
    fn hand_computed_example() {
        // K = 2, D = 3
        let b_mat = [0.5, -1.0, 2.0, 0.25, 0.0, 1.5];
        let offset = vec![0.1, 1.0, 3.0];
        let e = Encoder::from_matrix(&b_mat, offset, 2, Preprocess::Identity).unwrap();
        let h = e.encode(&[2.0, 1.0]).unwrap();
        // Bx = [0.0, 4.25, 1.5]
        let expected = [(0.1f64).cos() * 0.0f64.sin(), (5.25f64).cos() * (4.25f64).sin(), (4.5f64).cos() * (1.5f64).sin()];
        for (a, b) in h.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn unit_norm_preprocessing_is_scale_invariant() {
        let e = Encoder::new(4, 32, 5);
        let a = e.encode(&[1.0, 2.0, 0.0, 2.0]).unwrap();
        let b = e.encode(&[2.0, 4.0, 0.0, 4.0]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let e = Encoder::new(4, 8, 0);
        assert!(matches!(e.encode(&[1.0; 3]), Err(HdcError::Dimension { expected: 4, found: 3 })));
    }

    #[test]
    fn projection_statistics() {
        let e = Encoder::new(100, 1000, 9);
        let n = 100_000.0;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for d in 0..1000 {
            for k in 0..100 {
                let v = e.projection(d, k);
                sum += v;
                sq += v * v;
            }
        }
        assert!((sum / n).abs() < 0.02);
        assert!((sq / n - 1.0).abs() < 0.02);
        assert!(e.offset().iter().all(|&b| (0.0..2.0 * PI).contains(&b)));
    }
}
