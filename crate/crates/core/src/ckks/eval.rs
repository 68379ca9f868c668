use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::ring::{Domain, RnsPoly};

use super::{check_capacity, CkksError, CkksParams, Ciphertext, GaloisKeys, Plaintext, SwitchKey};

/// Snapshot of the evaluator's operation counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub add: u64,
    pub add_plain: u64,
    pub mul_plain: u64,
    /// Key-switched rotations (one per Galois key applied).
    pub rotate: u64,
    pub rescale: u64,
    pub reduce_sum: u64,
}

#[derive(Default)]
struct Counters {
    add: AtomicU64,
    add_plain: AtomicU64,
    mul_plain: AtomicU64,
    rotate: AtomicU64,
    rescale: AtomicU64,
    reduce_sum: AtomicU64,
}

fn bump(c: &AtomicU64) {
    c.fetch_add(1, Ordering::Relaxed);
}

/// Homomorphic operations for one parameter set. Holds no secrets.
pub struct Evaluator {
    params: CkksParams,
    counters: Counters,
}

impl Evaluator {
    pub fn new(params: &CkksParams) -> Self {
        Evaluator { params: params.clone(), counters: Counters::default() }
    }

    pub fn params(&self) -> &CkksParams {
        &self.params
    }

    pub fn counts(&self) -> OpCounts {
        let c = &self.counters;
        OpCounts {
            add: c.add.load(Ordering::Relaxed),
            add_plain: c.add_plain.load(Ordering::Relaxed),
            mul_plain: c.mul_plain.load(Ordering::Relaxed),
            rotate: c.rotate.load(Ordering::Relaxed),
            rescale: c.rescale.load(Ordering::Relaxed),
            reduce_sum: c.reduce_sum.load(Ordering::Relaxed),
        }
    }

    pub fn reset_counts(&self) {
        let c = &self.counters;
        for a in [&c.add, &c.add_plain, &c.mul_plain, &c.rotate, &c.rescale, &c.reduce_sum] {
            a.store(0, Ordering::Relaxed);
        }
    }

    fn check_ct(&self, ct: &Ciphertext) -> Result<(), CkksError> {
        let moduli = self.params.level_moduli(ct.level.min(self.params.max_level()));
        let ok = ct.level <= self.params.max_level()
            && ct.c0.moduli().len() == ct.level + 1
            && ct.c1.moduli().len() == ct.level + 1
            && ct.c0.moduli().iter().zip(moduli).all(|(a, b)| a.value() == b.value());
        if ok {
            Ok(())
        } else {
            Err(CkksError::ParameterMismatch)
        }
    }

    fn check_pt(&self, pt: &Plaintext, level: usize) -> Result<(), CkksError> {
        if pt.level < level {
            return Err(CkksError::LevelMismatch { expected: level, found: pt.level });
        }
        let moduli = self.params.level_moduli(pt.level.min(self.params.max_level()));
        if pt.poly.moduli().len() != pt.level + 1
            || !pt.poly.moduli().iter().zip(moduli).all(|(a, b)| a.value() == b.value())
        {
            return Err(CkksError::ParameterMismatch);
        }
        Ok(())
    }

    fn add_raw(a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, CkksError> {
        Ok(Ciphertext {
            c0: a.c0.add(&b.c0)?,
            c1: a.c1.add(&b.c1)?,
            scale_log2: a.scale_log2,
            level: a.level,
            seed: None,
            mul_depth: a.mul_depth.max(b.mul_depth),
            slot_bound: a.slot_bound + b.slot_bound,
            sum_bound: a.sum_bound + b.sum_bound,
        })
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, CkksError> {
        self.check_ct(a)?;
        self.check_ct(b)?;
        if a.scale_log2 != b.scale_log2 {
            return Err(CkksError::ScaleMismatch(a.scale_log2, b.scale_log2));
        }
        if a.level != b.level {
            return Err(CkksError::LevelMismatch { expected: a.level, found: b.level });
        }
        let out = Self::add_raw(a, b)?;
        check_capacity(&self.params, out.level, out.scale_log2, out.slot_bound)?;
        bump(&self.counters.add);
        Ok(out)
    }

    pub fn add_plain(&self, ct: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext, CkksError> {
        self.check_ct(ct)?;
        self.check_pt(pt, ct.level)?;
        if ct.scale_log2 != pt.scale_log2 {
            return Err(CkksError::ScaleMismatch(ct.scale_log2, pt.scale_log2));
        }
        let mut m = pt.poly.truncate_moduli(ct.level + 1);
        m.set_domain(Domain::Coefficient);
        let out = Ciphertext {
            c0: ct.c0.add(&m)?,
            c1: ct.c1.clone(),
            scale_log2: ct.scale_log2,
            level: ct.level,
            seed: ct.seed,
            mul_depth: ct.mul_depth,
            slot_bound: ct.slot_bound + pt.max_abs,
            sum_bound: ct.sum_bound + pt.sum_abs,
        };
        check_capacity(&self.params, out.level, out.scale_log2, out.slot_bound)?;
        bump(&self.counters.add_plain);
        Ok(out)
    }

    /// Slotwise product; the result's scale is the sum of both scales.
    pub fn mul_plain(&self, ct: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext, CkksError> {
        self.check_ct(ct)?;
        self.check_pt(pt, ct.level)?;
        let scale_log2 = ct.scale_log2 + pt.scale_log2;
        let slot_bound = ct.slot_bound * pt.max_abs;
        let sum_bound = (ct.slot_bound * pt.sum_abs).min(ct.sum_bound * pt.max_abs);
        check_capacity(&self.params, ct.level, scale_log2, slot_bound)?;
        let pt_ntt;
        let rows = if pt.poly.domain() == Domain::Ntt {
            &pt.poly.residues()[..=ct.level]
        } else {
            pt_ntt = pt.poly.truncate_moduli(ct.level + 1).ntt_forward()?;
            pt_ntt.residues()
        };
        let c0 = mul_rows(&ct.c0, rows)?;
        let c1 = mul_rows(&ct.c1, rows)?;
        bump(&self.counters.mul_plain);
        Ok(Ciphertext {
            c0,
            c1,
            scale_log2,
            level: ct.level,
            seed: None,
            mul_depth: ct.mul_depth + 1,
            slot_bound,
            sum_bound,
        })
    }

    /// Divides by the last ciphertext prime and drops it.
    pub fn rescale(&self, ct: &Ciphertext) -> Result<Ciphertext, CkksError> {
        self.check_ct(ct)?;
        if ct.level == 0 {
            return Err(CkksError::NoLevelLeft);
        }
        let last = ct.level;
        let bits = self.params.moduli()[last].bits();
        if ct.scale_log2 < bits {
            return Err(CkksError::ScaleMismatch(ct.scale_log2, bits));
        }
        let c0 = self.divide_by_last(&ct.c0, last, last);
        let c1 = self.divide_by_last(&ct.c1, last, last);
        bump(&self.counters.rescale);
        Ok(Ciphertext {
            c0,
            c1,
            scale_log2: ct.scale_log2 - bits,
            level: last - 1,
            seed: None,
            mul_depth: ct.mul_depth,
            slot_bound: ct.slot_bound,
            sum_bound: ct.sum_bound,
        })
    }

    /// Rounded division of a coefficient-domain polynomial by the prime at
    /// chain index `prime`, whose residues sit in row `row`; keeps rows `0..row`.
    fn divide_by_last(&self, p: &RnsPoly, row: usize, prime: usize) -> RnsPoly {
        debug_assert_eq!(p.domain(), Domain::Coefficient);
        let moduli = self.params.moduli();
        let pm = &moduli[prime];
        let last = &p.residues()[row];
        let centered: Vec<i64> = last.iter().map(|&x| pm.center(x)).collect();
        let keep = self.params.level_moduli(row - 1);
        let mut out = RnsPoly::zero(keep, Domain::Coefficient);
        for (j, (dst, m)) in out.residues_mut().iter_mut().zip(keep).enumerate() {
            let inv = self.params.inv_mod(prime, j);
            let inv_shoup = m.shoup(inv);
            for ((d, &x), &c) in dst.iter_mut().zip(&p.residues()[j]).zip(&centered) {
                *d = m.mul_shoup(m.sub(x, m.from_i64(c)), inv, inv_shoup);
            }
        }
        out
    }

    /// Left rotation of the slot vector by `step` (taken modulo the slot
    /// count), composed from power-of-two keys.
    pub fn rotate(&self, ct: &Ciphertext, step: usize, gks: &GaloisKeys) -> Result<Ciphertext, CkksError> {
        self.check_ct(ct)?;
        let step = step % self.params.slots();
        let mut out = ct.clone();
        for bit in 0..usize::BITS {
            let s = 1usize << bit;
            if s > step {
                break;
            }
            if step & s != 0 {
                let key = gks.get(s).ok_or(CkksError::MissingGaloisKey(s))?;
                out = self.apply_galois(&out, key)?;
            }
        }
        Ok(out)
    }

    fn apply_galois(&self, ct: &Ciphertext, key: &SwitchKey) -> Result<Ciphertext, CkksError> {
        let mut c0 = ct.c0.galois_automorphism(key.galois)?;
        let c1 = ct.c1.galois_automorphism(key.galois)?;
        let (u0, u1) = self.key_switch(&c1, ct.level, key);
        c0.add_assign(&u0)?;
        bump(&self.counters.rotate);
        Ok(Ciphertext {
            c0,
            c1: u1,
            scale_log2: ct.scale_log2,
            level: ct.level,
            seed: None,
            mul_depth: ct.mul_depth,
            slot_bound: ct.slot_bound,
            sum_bound: ct.sum_bound,
        })
    }

    /// Returns `(u0, u1)` with `u0 + u1*s ≈ c*s'` where `s'` is the source key of `key`.
    fn key_switch(&self, c: &RnsPoly, level: usize, key: &SwitchKey) -> (RnsPoly, RnsPoly) {
        let params = &self.params;
        let moduli = params.moduli();
        let n = params.n();
        let sp = params.special_index();
        let rows: Vec<usize> = (0..=level).chain(std::iter::once(sp)).collect();
        let mut acc0 = vec![vec![0u64; n]; rows.len()];
        let mut acc1 = vec![vec![0u64; n]; rows.len()];
        let mut buf = vec![0u64; n];
        for i in 0..=level {
            let qi = &moduli[i];
            let digit: Vec<i64> = c.residues()[i].iter().map(|&x| qi.center(x)).collect();
            for (t, &r) in rows.iter().enumerate() {
                let m = &moduli[r];
                if r == i {
                    buf.copy_from_slice(&c.residues()[i]);
                } else {
                    for (b, &d) in buf.iter_mut().zip(&digit) {
                        *b = m.from_i64(d);
                    }
                }
                m.forward_ntt(&mut buf);
                let kb = &key.b[i].residues()[r];
                let ka = &key.a[i].residues()[r];
                for k in 0..n {
                    acc0[t][k] = m.add(acc0[t][k], m.mul(buf[k], kb[k]));
                    acc1[t][k] = m.add(acc1[t][k], m.mul(buf[k], ka[k]));
                }
            }
        }
        let ext = params.moduli().iter().take(level + 1).cloned().chain(std::iter::once(moduli[sp].clone()));
        let ext: Vec<_> = ext.collect();
        let mut out = Vec::with_capacity(2);
        for acc in [acc0, acc1] {
            let mut p = RnsPoly::from_residues(&ext, acc, Domain::Ntt).expect("shape");
            p.to_coefficient().expect("NTT domain");
            out.push(self.divide_by_last(&p, level + 1, sp));
        }
        let u1 = out.pop().expect("two outputs");
        let u0 = out.pop().expect("two outputs");
        (u0, u1)
    }

    /// Sums the first `n` slots with `log2 n` rotations and additions.
    /// Slot 0 receives the total; with a period-`n` input every slot does.
    pub fn reduce_sum(&self, ct: &Ciphertext, n: usize, gks: &GaloisKeys) -> Result<Ciphertext, CkksError> {
        self.check_ct(ct)?;
        let slots = self.params.slots();
        if n == 0 || !n.is_power_of_two() || n > slots {
            return Err(CkksError::NotPowerOfTwo(n));
        }
        let (slot0, sum0) = (ct.slot_bound, ct.sum_bound);
        let mut acc = ct.clone();
        let mut width = 1usize;
        while width < n {
            let key = gks.get(width).ok_or(CkksError::MissingGaloisKey(width))?;
            let rotated = self.apply_galois(&acc, key)?;
            acc = Self::add_raw(&acc, &rotated)?;
            bump(&self.counters.add);
            width *= 2;
            acc.slot_bound = (width as f64 * slot0).min(sum0);
            acc.sum_bound = (width as f64 * sum0).min(slots as f64 * acc.slot_bound);
            check_capacity(&self.params, acc.level, acc.scale_log2, acc.slot_bound)?;
        }
        bump(&self.counters.reduce_sum);
        Ok(acc)
    }
}

fn mul_rows(p: &RnsPoly, rows: &[Vec<u64>]) -> Result<RnsPoly, CkksError> {
    let mut x = p.ntt_forward()?;
    for ((row, other), m) in x.residues_mut().iter_mut().zip(rows).zip(p.moduli()) {
        for (a, &b) in row.iter_mut().zip(other) {
            *a = m.mul(*a, b);
        }
    }
    x.to_coefficient()?;
    Ok(x)
}
