//! Word-sized prime moduli: modular arithmetic, primality, NTT-friendly
//! prime generation and primitive root search.

use super::{RingDegree, RingError};

/// Largest supported prime width.
pub const MAX_PRIME_BITS: u32 = 60;

/// An NTT-friendly prime `q ≡ 1 (mod 2N)` together with the constants needed
/// for Barrett reduction and the negacyclic NTT of degree `N`.
#[derive(Clone, Debug)]
pub struct PrimeModulus {
    q: u64,
    bits: u32,
    /// floor(2^(2*bits) / q)
    barrett_mu: u64,
    psi: u64,
    degree: RingDegree,
    pub(crate) tables: NttTables,
}

/// Twiddle tables in bit-reversed order, each with its Shoup companion.
#[derive(Clone, Debug)]
pub(crate) struct NttTables {
    pub psi_rev: Vec<u64>,
    pub psi_rev_shoup: Vec<u64>,
    pub inv_psi_rev: Vec<u64>,
    pub inv_psi_rev_shoup: Vec<u64>,
    pub n_inv: u64,
    pub n_inv_shoup: u64,
}

impl PartialEq for PrimeModulus {
    fn eq(&self, other: &Self) -> bool {
        self.q == other.q && self.degree == other.degree && self.psi == other.psi
    }
}

impl Eq for PrimeModulus {}

impl PrimeModulus {
    /// Builds the modulus, searching for the smallest primitive 2N-th root of unity.
    pub fn new(q: u64, degree: RingDegree) -> Result<Self, RingError> {
        check_ntt_prime(q, degree)?;
        let psi = minimal_primitive_root(q, degree)
            .ok_or(RingError::InvalidModulus { q, reason: "no primitive 2N-th root of unity" })?;
        Self::with_root(q, degree, psi)
    }

    /// Builds the modulus with a caller-chosen primitive 2N-th root `psi`.
    pub fn with_root(q: u64, degree: RingDegree, psi: u64) -> Result<Self, RingError> {
        check_ntt_prime(q, degree)?;
        let n = degree.n() as u64;
        if psi == 0 || psi >= q || pow_mod(psi, n, q) != q - 1 {
            return Err(RingError::InvalidModulus { q, reason: "psi is not a primitive 2N-th root of unity" });
        }
        let bits = 64 - q.leading_zeros();
        let barrett_mu = ((1u128 << (2 * bits)) / q as u128) as u64;
        let mut m = PrimeModulus {
            q,
            bits,
            barrett_mu,
            psi,
            degree,
            tables: NttTables {
                psi_rev: Vec::new(),
                psi_rev_shoup: Vec::new(),
                inv_psi_rev: Vec::new(),
                inv_psi_rev_shoup: Vec::new(),
                n_inv: 0,
                n_inv_shoup: 0,
            },
        };
        m.tables = m.build_tables();
        Ok(m)
    }

    fn build_tables(&self) -> NttTables {
        let n = self.degree.n();
        let log2n = self.degree.log2n();
        let psi_inv = self.inv(self.psi);
        let mut psi_pows = vec![1u64; n];
        let mut inv_pows = vec![1u64; n];
        for i in 1..n {
            psi_pows[i] = self.mul(psi_pows[i - 1], self.psi);
            inv_pows[i] = self.mul(inv_pows[i - 1], psi_inv);
        }
        let mut psi_rev = vec![0u64; n];
        let mut inv_psi_rev = vec![0u64; n];
        for i in 0..n {
            let r = bit_reverse(i, log2n);
            psi_rev[i] = psi_pows[r];
            inv_psi_rev[i] = inv_pows[r];
        }
        let psi_rev_shoup = psi_rev.iter().map(|&w| self.shoup(w)).collect();
        let inv_psi_rev_shoup = inv_psi_rev.iter().map(|&w| self.shoup(w)).collect();
        let n_inv = self.inv(n as u64 % self.q);
        NttTables {
            psi_rev,
            psi_rev_shoup,
            inv_psi_rev,
            inv_psi_rev_shoup,
            n_inv,
            n_inv_shoup: self.shoup(n_inv),
        }
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.q
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn psi(&self) -> u64 {
        self.psi
    }

    #[inline]
    pub fn degree(&self) -> RingDegree {
        self.degree
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    /// Barrett reduction of a product of two reduced operands.
    #[inline]
    pub fn reduce_product(&self, x: u128) -> u64 {
        debug_assert!(x < (self.q as u128) * (self.q as u128));
        let t = (x >> (self.bits - 1)) as u64;
        let qhat = ((t as u128 * self.barrett_mu as u128) >> (self.bits + 1)) as u64;
        let mut r = (x as u64).wrapping_sub(qhat.wrapping_mul(self.q));
        while r >= self.q {
            r -= self.q;
        }
        r
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_product(a as u128 * b as u128)
    }

    /// Precomputed companion `floor(w * 2^64 / q)` for [`Self::mul_shoup`].
    #[inline]
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.q as u128) as u64
    }

    #[inline]
    pub fn mul_shoup(&self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let hi = ((a as u128 * w_shoup as u128) >> 64) as u64;
        let r = a.wrapping_mul(w).wrapping_sub(hi.wrapping_mul(self.q));
        if r >= self.q {
            r - self.q
        } else {
            r
        }
    }

    /// Forward negacyclic NTT of one residue row, in place.
    pub fn forward_ntt(&self, a: &mut [u64]) {
        super::ntt::forward(a, self);
    }

    /// Inverse negacyclic NTT of one residue row, in place.
    pub fn inverse_ntt(&self, a: &mut [u64]) {
        super::ntt::inverse(a, self);
    }

    pub fn pow(&self, base: u64, exp: u64) -> u64 {
        pow_mod(base % self.q, exp, self.q)
    }

    /// Inverse by Fermat's little theorem; `a` must be nonzero.
    pub fn inv(&self, a: u64) -> u64 {
        debug_assert!(a % self.q != 0);
        self.pow(a, self.q - 2)
    }

    /// Maps a signed integer into `[0, q)`.
    #[inline]
    pub fn from_i64(&self, v: i64) -> u64 {
        let r = v.rem_euclid(self.q as i64);
        r as u64
    }

    #[inline]
    pub fn from_i128(&self, v: i128) -> u64 {
        v.rem_euclid(self.q as i128) as u64
    }

    /// Centered representative in `(-q/2, q/2]`.
    #[inline]
    pub fn center(&self, a: u64) -> i64 {
        if a > self.q / 2 {
            a as i64 - self.q as i64
        } else {
            a as i64
        }
    }
}

fn check_ntt_prime(q: u64, degree: RingDegree) -> Result<(), RingError> {
    if q < 3 || !is_prime(q) {
        return Err(RingError::InvalidModulus { q, reason: "not prime" });
    }
    if 64 - q.leading_zeros() > MAX_PRIME_BITS {
        return Err(RingError::InvalidModulus { q, reason: "wider than 60 bits" });
    }
    if (q - 1) % (2 * degree.n() as u64) != 0 {
        return Err(RingError::InvalidModulus { q, reason: "q is not 1 mod 2N" });
    }
    Ok(())
}

#[inline]
pub(crate) fn bit_reverse(i: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        i.reverse_bits() >> (usize::BITS - bits)
    }
}

pub fn pow_mod(mut base: u64, mut exp: u64, q: u64) -> u64 {
    let mut acc = 1u64 % q;
    base %= q;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = ((acc as u128 * base as u128) % q as u128) as u64;
        }
        base = ((base as u128 * base as u128) % q as u128) as u64;
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, exact for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 325, 9375, 28178, 450775, 9780504, 1795265022] {
        let a = a % n;
        if a == 0 {
            continue;
        }
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = ((x as u128 * x as u128) % n as u128) as u64;
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest primitive 2N-th root of unity modulo a prime `q ≡ 1 (mod 2N)`.
fn minimal_primitive_root(q: u64, degree: RingDegree) -> Option<u64> {
    let two_n = 2 * degree.n() as u64;
    let exp = (q - 1) / two_n;
    let mut root = None;
    for x in 2..q.min(1 << 20) {
        let g = pow_mod(x, exp, q);
        if pow_mod(g, two_n / 2, q) == q - 1 {
            root = Some(g);
            break;
        }
    }
    let g = root?;
    // every primitive root is an odd power of g
    let g2 = ((g as u128 * g as u128) % q as u128) as u64;
    let mut cur = g;
    let mut best = g;
    for _ in 0..degree.n() {
        best = best.min(cur);
        cur = ((cur as u128 * g2 as u128) % q as u128) as u64;
    }
    Some(best)
}

/// Deterministic prime search: walks down from `2^bits - 1` over values
/// `≡ 1 (mod 2N)` and returns the first `count` primes not in `exclude`.
pub fn generate_ntt_primes(
    bits: u32,
    degree: RingDegree,
    count: usize,
    exclude: &[u64],
) -> Result<Vec<u64>, RingError> {
    let two_n = 2 * degree.n() as u64;
    if bits > MAX_PRIME_BITS || (bits as u64) <= two_n.trailing_zeros() as u64 + 1 {
        return Err(RingError::PrimeSearch { bits, n: degree.n() });
    }
    let top = (1u64 << bits) - 1;
    let low = 1u64 << (bits - 1);
    let mut c = (top - 1) / two_n * two_n + 1;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if c < low {
            return Err(RingError::PrimeSearch { bits, n: degree.n() });
        }
        if is_prime(c) && !exclude.contains(&c) {
            out.push(c);
        }
        c -= two_n;
    }
    Ok(out)
}
