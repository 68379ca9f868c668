use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::ring::{
    sample_gaussian, sample_ternary_coeffs, sample_uniform, Domain, PrimeModulus, RnsPoly, DEFAULT_SIGMA,
};

use super::{CkksError, CkksParams, Ciphertext, Plaintext};

/// Ternary secret `s`, kept in NTT form over the whole chain.
#[derive(Clone)]
pub struct SecretKey {
    params: CkksParams,
    pub(crate) coeffs: Vec<i8>,
    ntt: RnsPoly,
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({:?})", self.params)
    }
}

impl PartialEq for SecretKey {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.coeffs == other.coeffs
    }
}

/// Expands a 32-byte seed into uniform residues over `moduli`.
pub(crate) fn expand_seed(seed: &[u8; 32], moduli: &[std::sync::Arc<PrimeModulus>], domain: Domain) -> RnsPoly {
    let mut rng = ChaCha20Rng::from_seed(*seed);
    let p = sample_uniform(moduli, &mut rng);
    RnsPoly::from_residues(moduli, p.residues().to_vec(), domain).expect("shape")
}

impl SecretKey {
    pub fn generate<R: Rng + ?Sized>(params: &CkksParams, rng: &mut R) -> Self {
        let coeffs: Vec<i8> = sample_ternary_coeffs(params.n(), rng).iter().map(|&c| c as i8).collect();
        Self::from_coeffs(params, coeffs).expect("ternary coefficients")
    }

    pub(crate) fn from_coeffs(params: &CkksParams, coeffs: Vec<i8>) -> Result<Self, CkksError> {
        if coeffs.len() != params.n() || coeffs.iter().any(|c| !(-1..=1).contains(c)) {
            return Err(CkksError::Malformed("secret key is not ternary of length N".into()));
        }
        let wide: Vec<i64> = coeffs.iter().map(|&c| c as i64).collect();
        let mut ntt = RnsPoly::from_signed(params.moduli(), &wide)?;
        ntt.to_ntt()?;
        Ok(SecretKey { params: params.clone(), coeffs, ntt })
    }

    pub fn params(&self) -> &CkksParams {
        &self.params
    }

    /// Ternary coefficients of `s`.
    pub fn coefficients(&self) -> &[i8] {
        &self.coeffs
    }

    fn level_ntt(&self, level: usize) -> RnsPoly {
        self.ntt.truncate_moduli(level + 1)
    }

    /// Symmetric encryption: `c1 = a` expanded from a fresh seed,
    /// `c0 = -a*s + m + e`.
    pub fn encrypt<R: Rng + ?Sized>(&self, pt: &Plaintext, rng: &mut R) -> Result<Ciphertext, CkksError> {
        let moduli = self.params.level_moduli(pt.level);
        if !pt.poly.moduli().iter().zip(moduli).all(|(a, b)| a.value() == b.value())
            || pt.poly.moduli().len() != moduli.len()
        {
            return Err(CkksError::ParameterMismatch);
        }
        let seed: [u8; 32] = rng.random();
        let a = expand_seed(&seed, moduli, Domain::Coefficient);
        let e = sample_gaussian(moduli, DEFAULT_SIGMA, rng);
        let mut a_s = a.ntt_forward()?;
        a_s.mul_assign(&self.level_ntt(pt.level))?;
        a_s.to_coefficient()?;
        let mut m = pt.poly.clone();
        m.set_domain(Domain::Coefficient);
        let mut c0 = m.sub(&a_s)?;
        c0.add_assign(&e)?;
        Ok(Ciphertext {
            c0,
            c1: a,
            scale_log2: pt.scale_log2,
            level: pt.level,
            seed: Some(seed),
            mul_depth: 0,
            slot_bound: pt.max_abs,
            sum_bound: pt.sum_abs,
        })
    }

    /// `c0 + c1*s`, at the ciphertext's scale.
    pub fn decrypt(&self, ct: &Ciphertext) -> Result<Plaintext, CkksError> {
        let moduli = self.params.level_moduli(ct.level);
        if ct.c0.moduli().len() != moduli.len()
            || !ct.c0.moduli().iter().zip(moduli).all(|(a, b)| a.value() == b.value())
        {
            return Err(CkksError::ParameterMismatch);
        }
        let mut c1s = ct.c1.ntt_forward()?;
        c1s.mul_assign(&self.level_ntt(ct.level))?;
        c1s.to_coefficient()?;
        let poly = ct.c0.add(&c1s)?;
        Ok(Plaintext {
            poly,
            scale_log2: ct.scale_log2,
            level: ct.level,
            max_abs: ct.slot_bound,
            sum_abs: ct.sum_bound,
        })
    }

    /// Decrypts and decodes in one step.
    pub fn decrypt_values(&self, ct: &Ciphertext) -> Result<Vec<f64>, CkksError> {
        Ok(self.params.decode(&self.decrypt(ct)?))
    }
}

/// Key-switching key from `s(X^g)` to `s`, one RNS digit per ciphertext prime.
///
/// Digit `i` is `(b_i, a_i)` over the full chain in NTT form with
/// `b_i = -a_i*s + e_i + P*s(X^g)*[i-th CRT indicator]`. The `a_i` are
/// expanded from seeds so that they need not be transmitted.
#[derive(Clone, PartialEq)]
pub struct SwitchKey {
    pub(crate) galois: u64,
    pub(crate) seeds: Vec<[u8; 32]>,
    pub(crate) b: Vec<RnsPoly>,
    pub(crate) a: Vec<RnsPoly>,
}

impl fmt::Debug for SwitchKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SwitchKey(g={}, digits={})", self.galois, self.b.len())
    }
}

impl SwitchKey {
    pub fn galois_element(&self) -> u64 {
        self.galois
    }

    fn generate<R: Rng + ?Sized>(sk: &SecretKey, galois: u64, rng: &mut R) -> Result<Self, CkksError> {
        let params = &sk.params;
        let moduli = params.moduli();
        let special = params.special_modulus().value();
        let s_wide: Vec<i64> = sk.coeffs.iter().map(|&c| c as i64).collect();
        let mut s_g = RnsPoly::from_signed(moduli, &s_wide)?.galois_automorphism(galois)?;
        s_g.to_ntt()?;
        let digits = params.max_level() + 1;
        let mut seeds = Vec::with_capacity(digits);
        let mut bs = Vec::with_capacity(digits);
        let mut as_ = Vec::with_capacity(digits);
        for i in 0..digits {
            let seed: [u8; 32] = rng.random();
            let a = expand_seed(&seed, moduli, Domain::Ntt);
            let mut e = sample_gaussian(moduli, DEFAULT_SIGMA, rng);
            e.to_ntt()?;
            let mut b = a.mul(&sk.ntt)?.negate();
            b.add_assign(&e)?;
            let qi = &moduli[i];
            let p_mod = special % qi.value();
            let sg_row = &s_g.residues()[i];
            for (x, &y) in b.residues_mut()[i].iter_mut().zip(sg_row) {
                *x = qi.add(*x, qi.mul(p_mod, y));
            }
            seeds.push(seed);
            bs.push(b);
            as_.push(a);
        }
        Ok(SwitchKey { galois, seeds, b: bs, a: as_ })
    }

    /// Rebuilds a key from its `b` parts and the seeds of its `a` parts.
    pub(crate) fn from_parts(
        params: &CkksParams,
        galois: u64,
        seeds: Vec<[u8; 32]>,
        b: Vec<RnsPoly>,
    ) -> Self {
        let a = seeds.iter().map(|s| expand_seed(s, params.moduli(), Domain::Ntt)).collect();
        SwitchKey { galois, seeds, b, a }
    }
}

/// Rotation keys indexed by left-rotation step.
#[derive(Clone, PartialEq)]
pub struct GaloisKeys {
    params: CkksParams,
    pub(crate) keys: BTreeMap<usize, SwitchKey>,
}

impl fmt::Debug for GaloisKeys {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GaloisKeys(steps={:?})", self.keys.keys().collect::<Vec<_>>())
    }
}

impl GaloisKeys {
    /// Keys for every power-of-two step `1, 2, …, N/4`.
    pub fn generate<R: Rng + ?Sized>(sk: &SecretKey, rng: &mut R) -> Result<Self, CkksError> {
        let slots = sk.params.slots();
        let steps: Vec<usize> = (0..).map(|i| 1usize << i).take_while(|&s| s < slots).collect();
        Self::generate_steps(sk, &steps, rng)
    }

    /// Keys for the given steps, each of which must be a power of two.
    pub fn generate_steps<R: Rng + ?Sized>(
        sk: &SecretKey,
        steps: &[usize],
        rng: &mut R,
    ) -> Result<Self, CkksError> {
        let mut keys = BTreeMap::new();
        for &step in steps {
            if !step.is_power_of_two() || step >= sk.params.slots() {
                return Err(CkksError::NotPowerOfTwo(step));
            }
            let g = sk.params.galois_element(step);
            keys.insert(step, SwitchKey::generate(sk, g, rng)?);
        }
        Ok(GaloisKeys { params: sk.params.clone(), keys })
    }

    pub(crate) fn from_keys(params: &CkksParams, keys: BTreeMap<usize, SwitchKey>) -> Self {
        GaloisKeys { params: params.clone(), keys }
    }

    pub fn params(&self) -> &CkksParams {
        &self.params
    }

    pub fn steps(&self) -> impl Iterator<Item = usize> + '_ {
        self.keys.keys().copied()
    }

    pub fn get(&self, step: usize) -> Option<&SwitchKey> {
        self.keys.get(&step)
    }
}

/// Secret key plus rotation keys for every power-of-two step.
pub fn keygen<R: Rng + ?Sized>(params: &CkksParams, rng: &mut R) -> Result<(SecretKey, GaloisKeys), CkksError> {
    let sk = SecretKey::generate(params, rng);
    let gks = GaloisKeys::generate(&sk, rng)?;
    Ok((sk, gks))
}
