use std::fmt;
use std::sync::Arc;

use crate::ring::{generate_ntt_primes, PrimeModulus, RingDegree, MAX_PRIME_BITS};

use super::encoding::SlotEncoder;
use super::CkksError;

/// Security level every accepted parameter set targets.
pub const SECURITY_BITS: u32 = 128;

/// Largest total modulus width (in bits) admitted at 128-bit security.
pub fn modulus_budget(log2n: u32) -> Option<u32> {
    match log2n {
        11 => Some(54),
        12 => Some(109),
        13 => Some(218),
        14 => Some(438),
        _ => None,
    }
}

/// Default two-prime chain and scale for each supported degree.
pub fn default_chain(log2n: u32) -> Option<(Vec<u32>, u32)> {
    match log2n {
        11 => Some((vec![27, 27], 20)),
        12 => Some((vec![54, 54], 30)),
        13 | 14 => Some((vec![60, 60], 30)),
        _ => None,
    }
}

/// A validated CKKS parameter set. Cheap to clone.
///
/// The chain is ordered `q_0, …, q_{L-1}, P`: all but the last prime carry
/// ciphertext data, the last one is reserved for key switching.
#[derive(Clone)]
pub struct CkksParams {
    inner: Arc<Inner>,
}

#[derive(Clone)]
struct Inner {
    degree: RingDegree,
    chain_bits: Vec<u32>,
    moduli: Vec<Arc<PrimeModulus>>,
    scale_log2: u32,
    encoder: SlotEncoder,
    /// `q_i^{-1} mod q_j` for `i != j`, indexed `[i][j]`.
    inv_table: Vec<Vec<u64>>,
}

impl fmt::Debug for CkksParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CkksParams(N=2^{}, chain={:?}, scale=2^{})", self.log2n(), self.chain_bits(), self.scale_log2())
    }
}

impl PartialEq for CkksParams {
    fn eq(&self, other: &Self) -> bool {
        self.degree() == other.degree()
            && self.moduli().iter().zip(other.moduli()).all(|(a, b)| a.value() == b.value())
            && self.moduli().len() == other.moduli().len()
    }
}

impl CkksParams {
    pub fn new(log2n: u32, chain_bits: &[u32], scale_log2: u32) -> Result<Self, CkksError> {
        let budget = modulus_budget(log2n).ok_or(CkksError::UnsupportedDegree(log2n))?;
        if chain_bits.len() < 2 {
            return Err(CkksError::ChainTooShort(chain_bits.len()));
        }
        if chain_bits.len() > u8::MAX as usize {
            return Err(CkksError::Malformed("chain too long".into()));
        }
        let total: u32 = chain_bits.iter().sum();
        if total > budget {
            return Err(CkksError::SecurityBudgetExceeded { log2n, total, budget });
        }
        if let Some(&b) = chain_bits.iter().find(|&&b| b > MAX_PRIME_BITS || b < 20) {
            return Err(CkksError::InvalidPrimeWidth(b));
        }
        if scale_log2 >= chain_bits[0] {
            return Err(CkksError::ScaleTooLarge { scale_log2, prime_bits: chain_bits[0] });
        }
        let degree = RingDegree::from_log2(log2n)?;
        let mut primes: Vec<u64> = Vec::with_capacity(chain_bits.len());
        for &b in chain_bits {
            let p = generate_ntt_primes(b, degree, 1, &primes)?;
            primes.push(p[0]);
        }
        let moduli = primes
            .iter()
            .map(|&q| PrimeModulus::new(q, degree).map(Arc::new))
            .collect::<Result<Vec<_>, _>>()?;
        let inv_table = moduli
            .iter()
            .map(|mi| {
                moduli
                    .iter()
                    .map(|mj| if mi.value() == mj.value() { 0 } else { mj.inv(mi.value() % mj.value()) })
                    .collect()
            })
            .collect();
        Ok(CkksParams {
            inner: Arc::new(Inner {
                degree,
                chain_bits: chain_bits.to_vec(),
                moduli,
                scale_log2,
                encoder: SlotEncoder::new(degree),
                inv_table,
            }),
        })
    }

    /// The default parameter set for a supported degree.
    pub fn standard(log2n: u32) -> Result<Self, CkksError> {
        let (chain, scale) = default_chain(log2n).ok_or(CkksError::UnsupportedDegree(log2n))?;
        Self::new(log2n, &chain, scale)
    }

    /// Same ring and chain, different default scale.
    pub fn with_scale(&self, scale_log2: u32) -> Result<Self, CkksError> {
        if scale_log2 >= self.chain_bits()[0] {
            return Err(CkksError::ScaleTooLarge { scale_log2, prime_bits: self.chain_bits()[0] });
        }
        let mut inner = (*self.inner).clone();
        inner.scale_log2 = scale_log2;
        Ok(CkksParams { inner: Arc::new(inner) })
    }

    #[inline]
    pub fn degree(&self) -> RingDegree {
        self.inner.degree
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.inner.degree.n()
    }

    #[inline]
    pub fn log2n(&self) -> u32 {
        self.inner.degree.log2n()
    }

    #[inline]
    pub fn slots(&self) -> usize {
        self.n() / 2
    }

    pub fn chain_bits(&self) -> &[u32] {
        &self.inner.chain_bits
    }

    #[inline]
    pub fn scale_log2(&self) -> u32 {
        self.inner.scale_log2
    }

    pub fn security_bits(&self) -> u32 {
        SECURITY_BITS
    }

    /// Every prime of the chain, special prime last.
    pub fn moduli(&self) -> &[Arc<PrimeModulus>] {
        &self.inner.moduli
    }

    /// Highest ciphertext level; a fresh ciphertext lives there.
    #[inline]
    pub fn max_level(&self) -> usize {
        self.inner.moduli.len() - 2
    }

    /// Primes carrying a ciphertext at `level`.
    pub fn level_moduli(&self, level: usize) -> &[Arc<PrimeModulus>] {
        &self.inner.moduli[..=level]
    }

    pub fn special_modulus(&self) -> &Arc<PrimeModulus> {
        self.inner.moduli.last().expect("chain has at least two primes")
    }

    #[inline]
    pub fn special_index(&self) -> usize {
        self.inner.moduli.len() - 1
    }

    /// `log2(Q_level) - 1`: the largest magnitude (in bits) a centered
    /// coefficient can hold at that level.
    pub fn capacity_bits(&self, level: usize) -> f64 {
        self.level_moduli(level).iter().map(|m| (m.value() as f64).log2()).sum::<f64>() - 1.0
    }

    /// Galois element `5^step mod 2N` realizing a left rotation by `step`.
    pub fn galois_element(&self, step: usize) -> u64 {
        let two_n = 2 * self.n() as u64;
        crate::ring::pow_mod(5, (step % self.slots()) as u64, two_n)
    }

    pub(crate) fn encoder(&self) -> &SlotEncoder {
        &self.inner.encoder
    }

    /// `q_i^{-1} mod q_j`.
    #[inline]
    pub(crate) fn inv_mod(&self, i: usize, j: usize) -> u64 {
        self.inner.inv_table[i][j]
    }

    /// Short human-readable label, e.g. `N=2^13 (60,60) 2^30`.
    pub fn label(&self) -> String {
        let chain: Vec<String> = self.chain_bits().iter().map(|b| b.to_string()).collect();
        format!("N=2^{} ({}) 2^{}", self.log2n(), chain.join(","), self.scale_log2())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_table_rows() {
        assert!(CkksParams::new(11, &[27, 27], 20).is_ok());
        assert!(CkksParams::new(12, &[54, 54], 30).is_ok());
        assert!(CkksParams::new(13, &[60, 60], 30).is_ok());
        assert!(CkksParams::new(14, &[60, 60], 30).is_ok());
        assert!(matches!(
            CkksParams::new(11, &[54, 54], 30),
            Err(CkksError::SecurityBudgetExceeded { total: 108, budget: 54, .. })
        ));
        assert!(matches!(CkksParams::new(12, &[54], 30), Err(CkksError::ChainTooShort(1))));
        assert!(matches!(CkksParams::new(10, &[27, 27], 20), Err(CkksError::UnsupportedDegree(10))));
        assert!(matches!(CkksParams::new(12, &[54, 54], 54), Err(CkksError::ScaleTooLarge { .. })));
    }

    #[test]
    fn chain_primes_are_distinct_and_sized() {
        let p = CkksParams::new(13, &[60, 40, 60], 30).unwrap();
        let q: Vec<u64> = p.moduli().iter().map(|m| m.value()).collect();
        assert_eq!(q.len(), 3);
        assert_ne!(q[0], q[2]);
        for (m, &b) in p.moduli().iter().zip(&[60u32, 40, 60]) {
            assert_eq!(m.bits(), b);
            assert_eq!((m.value() - 1) % (2 * p.n() as u64), 0);
        }
        assert_eq!(p.max_level(), 1);
        assert_eq!(p.special_index(), 2);
    }

    #[test]
    fn rotation_elements() {
        let p = CkksParams::standard(11).unwrap();
        assert_eq!(p.galois_element(0), 1);
        assert_eq!(p.galois_element(1), 5);
        assert_eq!(p.galois_element(p.slots()), 1);
        let s = p.with_scale(10).unwrap();
        assert_eq!(s.scale_log2(), 10);
        assert_eq!(s, p);
    }
}
