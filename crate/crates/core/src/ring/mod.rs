//! Exact arithmetic in `Z_q[X]/(X^N + 1)` with `q` a product of word-sized
//! NTT-friendly primes, stored in residue (RNS) form.

mod modulus;
mod ntt;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub use modulus::{generate_ntt_primes, is_prime, pow_mod, PrimeModulus, MAX_PRIME_BITS};

/// Default standard deviation of the error distribution.
pub const DEFAULT_SIGMA: f64 = 3.2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RingError {
    #[error("ring degree {0} is not a power of two >= 2")]
    InvalidDegree(usize),
    #[error("invalid modulus {q}: {reason}")]
    InvalidModulus { q: u64, reason: &'static str },
    #[error("no {bits}-bit NTT prime available for N = {n}")]
    PrimeSearch { bits: u32, n: usize },
    #[error("expected {expected} domain, found {found}")]
    Domain { expected: Domain, found: Domain },
    #[error("operands live in different rings")]
    ParameterMismatch,
    #[error("galois element {0} is not invertible modulo 2N")]
    EvenGaloisElement(u64),
    #[error("residue matrix has the wrong shape")]
    Shape,
}

/// Ring degree `N = 2^log2n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RingDegree {
    log2n: u32,
}

impl RingDegree {
    pub fn new(n: usize) -> Result<Self, RingError> {
        if n < 2 || !n.is_power_of_two() {
            return Err(RingError::InvalidDegree(n));
        }
        Ok(RingDegree { log2n: n.trailing_zeros() })
    }

    pub fn from_log2(log2n: u32) -> Result<Self, RingError> {
        if log2n == 0 || log2n > 20 {
            return Err(RingError::InvalidDegree(1usize.checked_shl(log2n).unwrap_or(0)));
        }
        Ok(RingDegree { log2n })
    }

    #[inline]
    pub fn n(self) -> usize {
        1 << self.log2n
    }

    #[inline]
    pub fn log2n(self) -> u32 {
        self.log2n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Coefficient,
    Ntt,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Coefficient => f.write_str("coefficient"),
            Domain::Ntt => f.write_str("NTT"),
        }
    }
}

/// A ring element as a `[num_moduli x N]` residue matrix.
#[derive(Clone, Debug)]
pub struct RnsPoly {
    degree: RingDegree,
    moduli: Vec<Arc<PrimeModulus>>,
    residues: Vec<Vec<u64>>,
    domain: Domain,
}

impl PartialEq for RnsPoly {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain && self.same_ring(other) && self.residues == other.residues
    }
}

impl Eq for RnsPoly {}

impl RnsPoly {
    /// Panics if `moduli` is empty or mixes degrees.
    pub fn zero(moduli: &[Arc<PrimeModulus>], domain: Domain) -> Self {
        let degree = moduli[0].degree();
        assert!(moduli.iter().all(|m| m.degree() == degree), "moduli for different degrees");
        RnsPoly {
            degree,
            moduli: moduli.to_vec(),
            residues: vec![vec![0u64; degree.n()]; moduli.len()],
            domain,
        }
    }

    /// Coefficient-domain polynomial from signed integer coefficients.
    pub fn from_signed(moduli: &[Arc<PrimeModulus>], coeffs: &[i64]) -> Result<Self, RingError> {
        let mut p = Self::zero(moduli, Domain::Coefficient);
        if coeffs.len() != p.degree.n() {
            return Err(RingError::Shape);
        }
        for (row, m) in p.residues.iter_mut().zip(moduli) {
            for (r, &c) in row.iter_mut().zip(coeffs) {
                *r = m.from_i64(c);
            }
        }
        Ok(p)
    }

    pub fn from_residues(
        moduli: &[Arc<PrimeModulus>],
        residues: Vec<Vec<u64>>,
        domain: Domain,
    ) -> Result<Self, RingError> {
        let p = Self::zero(moduli, domain);
        if residues.len() != moduli.len() {
            return Err(RingError::Shape);
        }
        for (row, m) in residues.iter().zip(moduli) {
            if row.len() != p.degree.n() || row.iter().any(|&r| r >= m.value()) {
                return Err(RingError::Shape);
            }
        }
        Ok(RnsPoly { residues, ..p })
    }

    #[inline]
    pub fn degree(&self) -> RingDegree {
        self.degree
    }

    #[inline]
    pub fn moduli(&self) -> &[Arc<PrimeModulus>] {
        &self.moduli
    }

    #[inline]
    pub fn residues(&self) -> &[Vec<u64>] {
        &self.residues
    }

    #[inline]
    pub(crate) fn residues_mut(&mut self) -> &mut [Vec<u64>] {
        &mut self.residues
    }

    #[inline]
    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn is_zero(&self) -> bool {
        self.residues.iter().all(|r| r.iter().all(|&x| x == 0))
    }

    pub fn same_ring(&self, other: &Self) -> bool {
        self.degree == other.degree
            && self.moduli.len() == other.moduli.len()
            && self.moduli.iter().zip(&other.moduli).all(|(a, b)| a.value() == b.value())
    }

    fn check_compatible(&self, other: &Self) -> Result<(), RingError> {
        if !self.same_ring(other) {
            return Err(RingError::ParameterMismatch);
        }
        if self.domain != other.domain {
            return Err(RingError::Domain { expected: self.domain, found: other.domain });
        }
        Ok(())
    }

    fn expect_domain(&self, expected: Domain) -> Result<(), RingError> {
        if self.domain != expected {
            return Err(RingError::Domain { expected, found: self.domain });
        }
        Ok(())
    }

    pub fn ntt_forward(&self) -> Result<Self, RingError> {
        let mut p = self.clone();
        p.to_ntt()?;
        Ok(p)
    }

    pub fn ntt_inverse(&self) -> Result<Self, RingError> {
        let mut p = self.clone();
        p.to_coefficient()?;
        Ok(p)
    }

    pub fn to_ntt(&mut self) -> Result<(), RingError> {
        self.expect_domain(Domain::Coefficient)?;
        for (row, m) in self.residues.iter_mut().zip(&self.moduli) {
            ntt::forward(row, m);
        }
        self.domain = Domain::Ntt;
        Ok(())
    }

    pub fn to_coefficient(&mut self) -> Result<(), RingError> {
        self.expect_domain(Domain::Ntt)?;
        for (row, m) in self.residues.iter_mut().zip(&self.moduli) {
            ntt::inverse(row, m);
        }
        self.domain = Domain::Coefficient;
        Ok(())
    }

    /// Converts to `domain` if it is not already there.
    pub fn set_domain(&mut self, domain: Domain) {
        match (self.domain, domain) {
            (Domain::Coefficient, Domain::Ntt) => self.to_ntt().expect("domain checked"),
            (Domain::Ntt, Domain::Coefficient) => self.to_coefficient().expect("domain checked"),
            _ => {}
        }
    }

    fn zip_rows(&mut self, other: &Self, f: impl Fn(&PrimeModulus, u64, u64) -> u64) {
        for ((row, orow), m) in self.residues.iter_mut().zip(&other.residues).zip(&self.moduli) {
            for (x, &y) in row.iter_mut().zip(orow) {
                *x = f(m, *x, y);
            }
        }
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<(), RingError> {
        self.check_compatible(other)?;
        self.zip_rows(other, |m, a, b| m.add(a, b));
        Ok(())
    }

    pub fn sub_assign(&mut self, other: &Self) -> Result<(), RingError> {
        self.check_compatible(other)?;
        self.zip_rows(other, |m, a, b| m.sub(a, b));
        Ok(())
    }

    /// Pointwise product; both operands must be in the NTT domain.
    pub fn mul_assign(&mut self, other: &Self) -> Result<(), RingError> {
        self.check_compatible(other)?;
        self.expect_domain(Domain::Ntt)?;
        self.zip_rows(other, |m, a, b| m.mul(a, b));
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, RingError> {
        let mut p = self.clone();
        p.add_assign(other)?;
        Ok(p)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, RingError> {
        let mut p = self.clone();
        p.sub_assign(other)?;
        Ok(p)
    }

    pub fn negate(&self) -> Self {
        let mut p = self.clone();
        for (row, m) in p.residues.iter_mut().zip(&self.moduli) {
            for x in row.iter_mut() {
                *x = m.neg(*x);
            }
        }
        p
    }

    /// Negacyclic product. Operands in the coefficient domain are moved to
    /// the NTT domain and the result is returned in the domain of `self`.
    pub fn mul(&self, other: &Self) -> Result<Self, RingError> {
        if !self.same_ring(other) {
            return Err(RingError::ParameterMismatch);
        }
        let mut a = self.clone();
        a.set_domain(Domain::Ntt);
        let mut b_owned;
        let b = if other.domain == Domain::Ntt {
            other
        } else {
            b_owned = other.clone();
            b_owned.to_ntt()?;
            &b_owned
        };
        a.mul_assign(b)?;
        a.set_domain(self.domain);
        Ok(a)
    }

    pub fn mul_scalar(&self, s: u64) -> Self {
        let mut p = self.clone();
        for (row, m) in p.residues.iter_mut().zip(&self.moduli) {
            let s = s % m.value();
            let ss = m.shoup(s);
            for x in row.iter_mut() {
                *x = m.mul_shoup(*x, s, ss);
            }
        }
        p
    }

    /// `a(X) -> a(X^g)` for odd `g`, coefficient domain only.
    pub fn galois_automorphism(&self, g: u64) -> Result<Self, RingError> {
        self.expect_domain(Domain::Coefficient)?;
        let n = self.degree.n();
        let two_n = 2 * n as u64;
        let g = g % two_n;
        if g % 2 == 0 {
            return Err(RingError::EvenGaloisElement(g));
        }
        let mut out = Self::zero(&self.moduli, Domain::Coefficient);
        for ((dst, src), m) in out.residues.iter_mut().zip(&self.residues).zip(&self.moduli) {
            let mut idx = 0u64;
            for &c in src.iter() {
                let j = idx as usize;
                if j < n {
                    dst[j] = c;
                } else {
                    dst[j - n] = m.neg(c);
                }
                idx += g;
                if idx >= two_n {
                    idx -= two_n;
                }
            }
        }
        Ok(out)
    }

    /// New polynomial made of the given residue rows, in the given order.
    pub fn select_moduli(&self, rows: &[usize]) -> Self {
        RnsPoly {
            degree: self.degree,
            moduli: rows.iter().map(|&i| self.moduli[i].clone()).collect(),
            residues: rows.iter().map(|&i| self.residues[i].clone()).collect(),
            domain: self.domain,
        }
    }

    /// Keeps the first `count` residue rows.
    pub fn truncate_moduli(&self, count: usize) -> Self {
        assert!(count >= 1 && count <= self.moduli.len());
        RnsPoly {
            degree: self.degree,
            moduli: self.moduli[..count].to_vec(),
            residues: self.residues[..count].to_vec(),
            domain: self.domain,
        }
    }
}

/// Inverse of an odd Galois element modulo `2N`.
pub fn galois_inverse(g: u64, degree: RingDegree) -> Result<u64, RingError> {
    let two_n = 2 * degree.n() as u64;
    let g = g % two_n;
    if g % 2 == 0 {
        return Err(RingError::EvenGaloisElement(g));
    }
    // the unit group of Z/2^k has exponent dividing 2^(k-1)
    Ok(pow_mod(g, degree.n() as u64 - 1, two_n))
}

/// Uniform ternary coefficients in `{-1, 0, 1}`.
pub fn sample_ternary_coeffs<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<i64> {
    (0..n).map(|_| rng.random_range(-1i64..=1)).collect()
}

pub fn sample_ternary<R: Rng + ?Sized>(moduli: &[Arc<PrimeModulus>], rng: &mut R) -> RnsPoly {
    let n = moduli[0].degree().n();
    RnsPoly::from_signed(moduli, &sample_ternary_coeffs(n, rng)).expect("shape")
}

/// Rounded Gaussian coefficients, clipped at six standard deviations.
pub fn sample_gaussian_coeffs<R: Rng + ?Sized>(n: usize, sigma: f64, rng: &mut R) -> Vec<i64> {
    if sigma <= 0.0 {
        return vec![0; n];
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let clip = (6.0 * sigma).round();
    (0..n)
        .map(|_| normal.sample(rng).round().clamp(-clip, clip) as i64)
        .collect()
}

pub fn sample_gaussian<R: Rng + ?Sized>(
    moduli: &[Arc<PrimeModulus>],
    sigma: f64,
    rng: &mut R,
) -> RnsPoly {
    let n = moduli[0].degree().n();
    RnsPoly::from_signed(moduli, &sample_gaussian_coeffs(n, sigma, rng)).expect("shape")
}

/// Independent uniform residues per prime, coefficient domain.
pub fn sample_uniform<R: Rng + ?Sized>(moduli: &[Arc<PrimeModulus>], rng: &mut R) -> RnsPoly {
    let mut p = RnsPoly::zero(moduli, Domain::Coefficient);
    for (row, m) in p.residues.iter_mut().zip(moduli) {
        for x in row.iter_mut() {
            *x = rng.random_range(0..m.value());
        }
    }
    p
}
