//! Little-endian binary formats for ciphertexts, plaintexts and keys.
//!
//! Common header: magic (4 bytes), version u16, log2n u8, chain_len u8,
//! per-prime bit widths u8[chain_len], scale_log2 u16, level u8, flags u8.

use std::collections::BTreeMap;

use crate::ring::{Domain, RnsPoly};

use super::keys::expand_seed;
use super::{CkksError, CkksParams, Ciphertext, GaloisKeys, Plaintext, SecretKey, SwitchKey};

pub const HEADER_MAGIC_CT: &[u8; 4] = b"HEHD";
pub const HEADER_MAGIC_PT: &[u8; 4] = b"HEHP";
pub const HEADER_MAGIC_SK: &[u8; 4] = b"HEHS";
pub const HEADER_MAGIC_GK: &[u8; 4] = b"HEHG";

const VERSION: u16 = 1;
const FLAG_SEED: u8 = 1;
const FLAG_NTT: u8 = 2;

struct Header {
    scale_log2: u32,
    level: usize,
    flags: u8,
}

fn header_len(params: &CkksParams) -> usize {
    4 + 2 + 1 + 1 + params.chain_bits().len() + 2 + 1 + 1
}

fn write_header(out: &mut Vec<u8>, magic: &[u8; 4], params: &CkksParams, h: &Header) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(params.log2n() as u8);
    out.push(params.chain_bits().len() as u8);
    out.extend(params.chain_bits().iter().map(|&b| b as u8));
    out.extend_from_slice(&(h.scale_log2 as u16).to_le_bytes());
    out.push(h.level as u8);
    out.push(h.flags);
}

fn write_rows(out: &mut Vec<u8>, rows: &[Vec<u64>]) {
    for row in rows {
        for x in row {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], CkksError> {
        if self.buf.len() - self.pos < n {
            return Err(CkksError::Malformed(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, CkksError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, CkksError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("length")))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, CkksError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("length")))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, CkksError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("length")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64, CkksError> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub(crate) fn seed(&mut self) -> Result<[u8; 32], CkksError> {
        Ok(self.take(32)?.try_into().expect("length"))
    }

    pub(crate) fn finish(&self) -> Result<(), CkksError> {
        if self.pos != self.buf.len() {
            return Err(CkksError::Malformed(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }

    fn header(&mut self, magic: &[u8; 4], params: &CkksParams) -> Result<Header, CkksError> {
        if self.take(4)? != magic {
            return Err(CkksError::Malformed("bad magic".into()));
        }
        let version = self.u16()?;
        if version != VERSION {
            return Err(CkksError::Malformed(format!("unsupported version {version}")));
        }
        let log2n = self.u8()? as u32;
        let len = self.u8()? as usize;
        let bits: Vec<u32> = self.take(len)?.iter().map(|&b| b as u32).collect();
        if log2n != params.log2n() || bits != params.chain_bits() {
            return Err(CkksError::ParameterMismatch);
        }
        let scale_log2 = self.u16()? as u32;
        let level = self.u8()? as usize;
        let flags = self.u8()?;
        Ok(Header { scale_log2, level, flags })
    }

    fn rows(&mut self, params: &CkksParams, count: usize, domain: Domain) -> Result<RnsPoly, CkksError> {
        let n = params.n();
        let moduli = &params.moduli()[..count];
        let mut rows = Vec::with_capacity(count);
        for _ in 0..count {
            let raw = self.take(8 * n)?;
            rows.push(raw.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))).collect());
        }
        RnsPoly::from_residues(moduli, rows, domain).map_err(|_| CkksError::Malformed("residue out of range".into()))
    }

    /// Rows for the ciphertext primes up to `level` (taken in chain order).
    fn level_rows(&mut self, params: &CkksParams, level: usize, domain: Domain) -> Result<RnsPoly, CkksError> {
        if level > params.max_level() {
            return Err(CkksError::Malformed(format!("level {level} beyond the chain")));
        }
        self.rows(params, level + 1, domain)
    }
}

/// Serialized size of a ciphertext at `level`.
pub fn ciphertext_size(params: &CkksParams, level: usize, seed_compressed: bool) -> usize {
    let body = (level + 1) * params.n() * 8;
    header_len(params) + body + if seed_compressed { 32 } else { body }
}

impl Ciphertext {
    pub fn to_bytes(&self, params: &CkksParams) -> Vec<u8> {
        let mut out = Vec::with_capacity(ciphertext_size(params, self.level, self.seed.is_some()));
        let flags = if self.seed.is_some() { FLAG_SEED } else { 0 };
        write_header(&mut out, HEADER_MAGIC_CT, params, &Header { scale_log2: self.scale_log2, level: self.level, flags });
        write_rows(&mut out, self.c0.residues());
        match &self.seed {
            Some(seed) => out.extend_from_slice(seed),
            None => write_rows(&mut out, self.c1.residues()),
        }
        out
    }

    /// Parses a ciphertext. Message bounds are unknown on the wire and are
    /// reset to `|slot| <= 1`.
    pub fn from_bytes(bytes: &[u8], params: &CkksParams) -> Result<Self, CkksError> {
        let mut r = Reader::new(bytes);
        let h = r.header(HEADER_MAGIC_CT, params)?;
        let c0 = r.level_rows(params, h.level, Domain::Coefficient)?;
        let (c1, seed) = if h.flags & FLAG_SEED != 0 {
            let seed = r.seed()?;
            (expand_seed(&seed, params.level_moduli(h.level), Domain::Coefficient), Some(seed))
        } else {
            (r.level_rows(params, h.level, Domain::Coefficient)?, None)
        };
        r.finish()?;
        Ok(Ciphertext {
            c0,
            c1,
            scale_log2: h.scale_log2,
            level: h.level,
            seed,
            mul_depth: 0,
            slot_bound: 1.0,
            sum_bound: params.slots() as f64,
        })
    }
}

impl Plaintext {
    pub fn to_bytes(&self, params: &CkksParams) -> Vec<u8> {
        let mut out = Vec::new();
        let flags = if self.poly.domain() == Domain::Ntt { FLAG_NTT } else { 0 };
        write_header(&mut out, HEADER_MAGIC_PT, params, &Header { scale_log2: self.scale_log2, level: self.level, flags });
        write_rows(&mut out, self.poly.residues());
        out.extend_from_slice(&self.max_abs.to_bits().to_le_bytes());
        out.extend_from_slice(&self.sum_abs.to_bits().to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], params: &CkksParams) -> Result<Self, CkksError> {
        let mut r = Reader::new(bytes);
        let h = r.header(HEADER_MAGIC_PT, params)?;
        let domain = if h.flags & FLAG_NTT != 0 { Domain::Ntt } else { Domain::Coefficient };
        let poly = r.level_rows(params, h.level, domain)?;
        let max_abs = r.f64()?;
        let sum_abs = r.f64()?;
        r.finish()?;
        Ok(Plaintext { poly, scale_log2: h.scale_log2, level: h.level, max_abs, sum_abs })
    }
}

impl SecretKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let params = self.params();
        let mut out = Vec::new();
        write_header(&mut out, HEADER_MAGIC_SK, params, &Header { scale_log2: 0, level: params.max_level(), flags: 0 });
        out.extend(self.coeffs.iter().map(|&c| c as u8));
        out
    }

    pub fn from_bytes(bytes: &[u8], params: &CkksParams) -> Result<Self, CkksError> {
        let mut r = Reader::new(bytes);
        r.header(HEADER_MAGIC_SK, params)?;
        let coeffs: Vec<i8> = r.take(params.n())?.iter().map(|&b| b as i8).collect();
        r.finish()?;
        SecretKey::from_coeffs(params, coeffs)
    }
}

impl GaloisKeys {
    pub fn to_bytes(&self) -> Vec<u8> {
        let params = self.params();
        let mut out = Vec::new();
        write_header(&mut out, HEADER_MAGIC_GK, params, &Header { scale_log2: 0, level: params.max_level(), flags: FLAG_SEED });
        out.extend_from_slice(&(self.keys.len() as u16).to_le_bytes());
        for (&step, key) in &self.keys {
            out.extend_from_slice(&(step as u32).to_le_bytes());
            out.extend_from_slice(&key.galois.to_le_bytes());
            out.push(key.b.len() as u8);
            for (seed, b) in key.seeds.iter().zip(&key.b) {
                out.extend_from_slice(seed);
                write_rows(&mut out, b.residues());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], params: &CkksParams) -> Result<Self, CkksError> {
        let mut r = Reader::new(bytes);
        r.header(HEADER_MAGIC_GK, params)?;
        let count = r.u16()? as usize;
        let mut keys = BTreeMap::new();
        for _ in 0..count {
            let step = r.u32()? as usize;
            let galois = r.u64()?;
            if !step.is_power_of_two() || step >= params.slots() || galois != params.galois_element(step) {
                return Err(CkksError::Malformed(format!("bad rotation key for step {step}")));
            }
            let digits = r.u8()? as usize;
            if digits != params.max_level() + 1 {
                return Err(CkksError::Malformed("wrong digit count".into()));
            }
            let mut seeds = Vec::with_capacity(digits);
            let mut bs = Vec::with_capacity(digits);
            for _ in 0..digits {
                seeds.push(r.seed()?);
                bs.push(r.rows(params, params.moduli().len(), Domain::Ntt)?);
            }
            keys.insert(step, SwitchKey::from_parts(params, galois, seeds, bs));
        }
        r.finish()?;
        Ok(GaloisKeys::from_keys(params, keys))
    }
}
