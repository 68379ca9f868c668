//! In-place negacyclic NTT over a single prime.
//!
//! Forward: Cooley-Tukey, natural order in, bit-reversed order out, with the
//! powers of psi folded into the twiddles so that no pre/post twisting is
//! needed. Inverse: Gentleman-Sande, bit-reversed in, natural out.

use super::PrimeModulus;

pub(crate) fn forward(a: &mut [u64], m: &PrimeModulus) {
    let n = a.len();
    debug_assert_eq!(n, m.degree().n());
    let t_ = &m.tables;
    let q = m.value();
    let mut t = n;
    let mut groups = 1;
    while groups < n {
        t >>= 1;
        for i in 0..groups {
            let w = t_.psi_rev[groups + i];
            let ws = t_.psi_rev_shoup[groups + i];
            let start = 2 * i * t;
            let (lo, hi) = a[start..start + 2 * t].split_at_mut(t);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let u = *x;
                let v = m.mul_shoup(*y, w, ws);
                let s = u + v;
                *x = if s >= q { s - q } else { s };
                *y = if u >= v { u - v } else { u + q - v };
            }
        }
        groups <<= 1;
    }
}

pub(crate) fn inverse(a: &mut [u64], m: &PrimeModulus) {
    let n = a.len();
    debug_assert_eq!(n, m.degree().n());
    let t_ = &m.tables;
    let q = m.value();
    let mut t = 1;
    let mut groups = n;
    while groups > 1 {
        let h = groups >> 1;
        for i in 0..h {
            let w = t_.inv_psi_rev[h + i];
            let ws = t_.inv_psi_rev_shoup[h + i];
            let start = 2 * i * t;
            let (lo, hi) = a[start..start + 2 * t].split_at_mut(t);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let u = *x;
                let v = *y;
                let s = u + v;
                *x = if s >= q { s - q } else { s };
                let d = if u >= v { u - v } else { u + q - v };
                *y = m.mul_shoup(d, w, ws);
            }
        }
        t <<= 1;
        groups = h;
    }
    for x in a.iter_mut() {
        *x = m.mul_shoup(*x, t_.n_inv, t_.n_inv_shoup);
    }
}
