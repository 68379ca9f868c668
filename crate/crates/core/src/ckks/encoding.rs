//! Canonical embedding between real slot vectors and ring elements.
//!
//! Slot `j` holds the evaluation at `zeta^(5^j)` where `zeta = exp(i*pi/N)`.
//! Real inputs are extended by conjugate symmetry, so slot `j` is paired
//! with the evaluation at `zeta^(-5^j)`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::ring::{Domain, PrimeModulus, RingDegree, RnsPoly};

use super::{CkksError, CkksParams, Plaintext};

#[derive(Clone)]
pub(crate) struct SlotEncoder {
    n: usize,
    /// Position of slot `j` among the `N` odd powers of `zeta`.
    slot_index: Vec<usize>,
    conj_index: Vec<usize>,
    twist: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl SlotEncoder {
    pub(crate) fn new(degree: RingDegree) -> Self {
        let n = degree.n();
        let two_n = 2 * n;
        let slots = n / 2;
        let mut slot_index = Vec::with_capacity(slots);
        let mut conj_index = Vec::with_capacity(slots);
        let mut e = 1usize;
        for _ in 0..slots {
            slot_index.push((e - 1) / 2);
            conj_index.push((two_n - e - 1) / 2);
            e = e * 5 % two_n;
        }
        let twist = (0..n)
            .map(|k| Complex64::from_polar(1.0, PI * k as f64 / n as f64))
            .collect();
        let mut planner = FftPlanner::new();
        SlotEncoder {
            n,
            slot_index,
            conj_index,
            twist,
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
        }
    }

    /// Real coefficients (unscaled) whose embedding is `values` zero-extended.
    pub(crate) fn coefficients(&self, values: &[f64]) -> Vec<f64> {
        let mut e = vec![Complex64::new(0.0, 0.0); self.n];
        for (j, &v) in values.iter().enumerate() {
            e[self.slot_index[j]] = Complex64::new(v, 0.0);
            e[self.conj_index[j]] = Complex64::new(v, 0.0);
        }
        self.fft.process(&mut e);
        let inv_n = 1.0 / self.n as f64;
        e.iter().zip(&self.twist).map(|(x, w)| (x * w.conj()).re * inv_n).collect()
    }

    /// Complex slot values of a real coefficient vector.
    pub(crate) fn slots(&self, coeffs: &[f64]) -> Vec<Complex64> {
        let mut e: Vec<Complex64> = coeffs.iter().zip(&self.twist).map(|(&c, w)| w * c).collect();
        self.ifft.process(&mut e);
        self.slot_index.iter().map(|&t| e[t]).collect()
    }
}

/// Exact centered lift of an RNS polynomial to `f64`, divided by `2^scale_log2`.
///
/// Mixed-radix (Garner) digits keep the lift exact up to the final
/// conversion, so no big integers are needed.
pub(crate) fn lift_centered(poly: &RnsPoly, params: &CkksParams, scale_log2: u32) -> Vec<f64> {
    let moduli = poly.moduli();
    let rows = poly.residues();
    let n = poly.degree().n();
    let inv_scale = (-(scale_log2 as f64)).exp2();
    if moduli.len() == 1 {
        let m = &moduli[0];
        return rows[0].iter().map(|&r| m.center(r) as f64 * inv_scale).collect();
    }
    let l = moduli.len();
    let qs: Vec<f64> = moduli.iter().map(|m| m.value() as f64).collect();
    // Q / 2 compared through the top digit: x > Q/2 iff x / Q > 1/2
    let mut out = Vec::with_capacity(n);
    let mut digits = vec![0u64; l];
    for k in 0..n {
        for i in 0..l {
            let mi: &PrimeModulus = &moduli[i];
            let mut t = rows[i][k];
            for j in 0..i {
                t = mi.mul(mi.sub(t, digits[j] % mi.value()), params.inv_mod(j, i));
            }
            digits[i] = t;
        }
        // ratio = x / Q = sum_i d_i / (q_i q_{i+1} ... q_{l-1})
        let mut ratio = 0.0;
        for i in (0..l).rev() {
            ratio = (ratio + digits[i] as f64) / qs[i];
        }
        let negative = ratio > 0.5;
        let mut acc = 0.0;
        for i in (0..l).rev() {
            let d = if negative { moduli[i].value() - 1 - digits[i] } else { digits[i] } as f64;
            acc = acc * qs[i] + d;
        }
        let v = if negative { -(acc + 1.0) } else { acc };
        out.push(v * inv_scale);
    }
    out
}

impl CkksParams {
    /// Encodes at the default scale and top level.
    pub fn encode(&self, values: &[f64]) -> Result<Plaintext, CkksError> {
        self.encode_at(values, self.scale_log2(), self.max_level())
    }

    /// Encodes `values` (at most `N/2` of them) at scale `2^scale_log2`.
    pub fn encode_at(&self, values: &[f64], scale_log2: u32, level: usize) -> Result<Plaintext, CkksError> {
        if values.len() > self.slots() {
            return Err(CkksError::TooManyValues { len: values.len(), slots: self.slots() });
        }
        if level > self.max_level() {
            return Err(CkksError::LevelMismatch { expected: self.max_level(), found: level });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(CkksError::NonFinite(*v));
        }
        let max_abs = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let sum_abs: f64 = values.iter().map(|v| v.abs()).sum();
        super::check_capacity(self, level, scale_log2, max_abs)?;
        let scale = (scale_log2 as f64).exp2();
        let coeffs: Vec<i128> = self
            .encoder()
            .coefficients(values)
            .iter()
            .map(|c| (c * scale).round() as i128)
            .collect();
        let moduli = self.level_moduli(level);
        let mut poly = RnsPoly::zero(moduli, Domain::Coefficient);
        for (row, m) in poly.residues_mut().iter_mut().zip(moduli) {
            for (r, &c) in row.iter_mut().zip(&coeffs) {
                *r = m.from_i128(c);
            }
        }
        Ok(Plaintext { poly, scale_log2, level, max_abs, sum_abs })
    }

    /// Real parts of the slots.
    pub fn decode(&self, pt: &Plaintext) -> Vec<f64> {
        self.decode_complex(pt).iter().map(|c| c.re).collect()
    }

    pub fn decode_complex(&self, pt: &Plaintext) -> Vec<Complex64> {
        let mut poly = pt.poly.clone();
        poly.set_domain(Domain::Coefficient);
        let coeffs = lift_centered(&poly, self, pt.scale_log2);
        self.encoder().slots(&coeffs)
    }
}
