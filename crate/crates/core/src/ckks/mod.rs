//! Approximate homomorphic encryption over real slot vectors (CKKS), restricted
//! to what a depth-one similarity search needs: ct+ct, ct+pt, ct×pt,
//! rotation, reduce-sum, and an optional rescale.

mod encoding;
mod eval;
mod keys;
mod noise;
mod params;
mod serialize;

use thiserror::Error;

use crate::ring::{RingError, RnsPoly};

pub use eval::{Evaluator, OpCounts};
pub use keys::{keygen, GaloisKeys, SecretKey, SwitchKey};
pub use noise::{measure_noise, mul_plain_scale, tolerances, NoiseProfile};
pub use params::{default_chain, modulus_budget, CkksParams, SECURITY_BITS};
pub use serialize::{ciphertext_size, HEADER_MAGIC_CT, HEADER_MAGIC_GK, HEADER_MAGIC_PT, HEADER_MAGIC_SK};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CkksError {
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error("unsupported ring degree 2^{0}")]
    UnsupportedDegree(u32),
    #[error("modulus chain of {total} bits exceeds the {budget}-bit budget for N = 2^{log2n}")]
    SecurityBudgetExceeded { log2n: u32, total: u32, budget: u32 },
    #[error("modulus chain needs at least two primes, got {0}")]
    ChainTooShort(usize),
    #[error("unsupported prime width {0}")]
    InvalidPrimeWidth(u32),
    #[error("scale 2^{scale_log2} does not fit under a {prime_bits}-bit prime")]
    ScaleTooLarge { scale_log2: u32, prime_bits: u32 },
    #[error("result may overflow: needs {needed_bits:.2} bits, capacity is {capacity_bits:.2}")]
    OverflowRisk { needed_bits: f64, capacity_bits: f64 },
    #[error("scale mismatch: 2^{0} vs 2^{1}")]
    ScaleMismatch(u32, u32),
    #[error("level mismatch: expected {expected}, found {found}")]
    LevelMismatch { expected: usize, found: usize },
    #[error("no level left to rescale")]
    NoLevelLeft,
    #[error("no Galois key for rotation step {0}")]
    MissingGaloisKey(usize),
    #[error("{0} is not a power of two within the slot count")]
    NotPowerOfTwo(usize),
    #[error("{len} values do not fit in {slots} slots")]
    TooManyValues { len: usize, slots: usize },
    #[error("non-finite input value {0}")]
    NonFinite(f64),
    #[error("objects belong to different parameter sets")]
    ParameterMismatch,
    #[error("malformed encoding: {0}")]
    Malformed(String),
}

/// An encoded slot vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Plaintext {
    pub(crate) poly: RnsPoly,
    pub(crate) scale_log2: u32,
    pub(crate) level: usize,
    /// Largest |slot| of the encoded vector.
    pub(crate) max_abs: f64,
    /// Sum of |slot| over the encoded vector.
    pub(crate) sum_abs: f64,
}

impl Plaintext {
    pub fn poly(&self) -> &RnsPoly {
        &self.poly
    }

    pub fn scale_log2(&self) -> u32 {
        self.scale_log2
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Switches the polynomial to the NTT domain, which is what ct×pt consumes.
    pub fn into_ntt(mut self) -> Self {
        self.poly.set_domain(crate::ring::Domain::Ntt);
        self
    }
}

/// A symmetric RLWE ciphertext `(c0, c1)` with `c0 + c1*s ≈ Δ·m`, kept in
/// the coefficient domain.
#[derive(Clone, Debug)]
pub struct Ciphertext {
    pub(crate) c0: RnsPoly,
    pub(crate) c1: RnsPoly,
    pub(crate) scale_log2: u32,
    pub(crate) level: usize,
    /// Present while `c1` is still the expansion of this seed.
    pub(crate) seed: Option<[u8; 32]>,
    pub(crate) mul_depth: u32,
    /// Upper bound on |slot| of the underlying message.
    pub(crate) slot_bound: f64,
    /// Upper bound on the sum of |slot| over all slots.
    pub(crate) sum_bound: f64,
}

impl PartialEq for Ciphertext {
    fn eq(&self, other: &Self) -> bool {
        self.c0 == other.c0
            && self.c1 == other.c1
            && self.scale_log2 == other.scale_log2
            && self.level == other.level
    }
}

impl Ciphertext {
    pub fn c0(&self) -> &RnsPoly {
        &self.c0
    }

    pub fn c1(&self) -> &RnsPoly {
        &self.c1
    }

    pub fn scale_log2(&self) -> u32 {
        self.scale_log2
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Number of ct×pt multiplications on this ciphertext's path.
    pub fn mul_depth(&self) -> u32 {
        self.mul_depth
    }

    pub fn is_seed_compressed(&self) -> bool {
        self.seed.is_some()
    }

    pub fn slot_bound(&self) -> f64 {
        self.slot_bound
    }

    pub fn sum_bound(&self) -> f64 {
        self.sum_bound
    }

    /// Overrides the tracked message bounds, e.g. when the caller knows
    /// tighter ones than the defaults assumed after deserialization.
    pub fn set_bounds(&mut self, slot_bound: f64, sum_bound: f64) {
        self.slot_bound = slot_bound;
        self.sum_bound = sum_bound;
    }
}

/// Rejects a result whose largest slot, scaled, may not fit in the centered
/// range of `Q_level`. Coefficients are bounded by the largest slot, so this
/// covers the coefficient representation as well.
pub(crate) fn check_capacity(
    params: &CkksParams,
    level: usize,
    scale_log2: u32,
    slot_bound: f64,
) -> Result<(), CkksError> {
    if slot_bound <= 0.0 {
        return Ok(());
    }
    let needed_bits = slot_bound.log2() + scale_log2 as f64;
    let capacity_bits = params.capacity_bits(level);
    if needed_bits > capacity_bits {
        return Err(CkksError::OverflowRisk { needed_bits, capacity_bits });
    }
    Ok(())
}

/// Largest scale (in bits) at which a message bounded by `slot_bound` can be
/// held at `level`, or `None` if even scale 1 does not fit.
pub fn max_admissible_scale(params: &CkksParams, level: usize, slot_bound: f64) -> Option<u32> {
    let cap = params.capacity_bits(level);
    let room = if slot_bound > 0.0 { cap - slot_bound.log2() } else { cap };
    if room < 0.0 {
        None
    } else {
        Some(room.floor() as u32)
    }
}
