use crate::ckks::CkksParams;

/// How a length-`D` hypervector is spread over ciphertexts.
///
/// The vector is cut into `k = ceil(D / slots)` contiguous chunks. Each chunk
/// is zero-padded to `n`, the next power of two of `min(D, slots)`, and
/// repeated with period `n` across all slots, so that a `reduce_sum` over `n`
/// leaves the dot product in every slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub hv_dim: usize,
    pub slots: usize,
    pub chunk_len: usize,
    pub chunks: usize,
}

impl Layout {
    pub fn new(hv_dim: usize, params: &CkksParams) -> Self {
        let slots = params.slots();
        Layout {
            hv_dim,
            slots,
            chunk_len: hv_dim.clamp(1, slots).next_power_of_two(),
            chunks: hv_dim.div_ceil(slots).max(1),
        }
    }

    /// Slot vector of chunk `i`.
    pub fn pack(&self, v: &[f64], i: usize) -> Vec<f64> {
        let start = (i * self.slots).min(v.len());
        let part = &v[start..(start + self.slots).min(v.len())];
        let mut out = vec![0.0; self.slots];
        for block in out.chunks_mut(self.chunk_len) {
            block[..part.len()].copy_from_slice(part);
        }
        out
    }

    pub fn pack_all(&self, v: &[f64]) -> Vec<Vec<f64>> {
        (0..self.chunks).map(|i| self.pack(v, i)).collect()
    }

    /// Inverse of [`Layout::pack_all`], reading the first period of each chunk.
    pub fn unpack(&self, chunks: &[Vec<f64>]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.hv_dim);
        for c in chunks {
            let take = (self.hv_dim - out.len()).min(self.chunk_len);
            out.extend_from_slice(&c[..take]);
        }
        out
    }
}
