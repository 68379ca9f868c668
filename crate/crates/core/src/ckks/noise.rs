//! Empirical noise calibration and the tolerances frozen from it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::{keygen, CkksError, CkksParams, Evaluator};

/// Worst-case absolute slot errors for one parameter set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NoiseProfile {
    pub encrypt: f64,
    pub add: f64,
    pub mul_plain: f64,
    pub rotate: f64,
}

/// Frozen tolerances: four times the maxima measured by [`measure_noise`]
/// (20 trials, seed 7) at each default parameter set.
pub fn tolerances(log2n: u32) -> Option<NoiseProfile> {
    let t = |encrypt, add, mul_plain, rotate| NoiseProfile { encrypt, add, mul_plain, rotate };
    match log2n {
        11 => Some(t(1.7e-3, 2.4e-3, 5.8, 6.6e-2)),
        12 => Some(t(2.4e-6, 3.4e-6, 6.8e-5, 7.9e-5)),
        13 => Some(t(3.6e-6, 5.2e-6, 3.0e-6, 1.5e-4)),
        14 => Some(t(5.5e-6, 7.3e-6, 4.7e-6, 3.7e-4)),
        _ => None,
    }
}

/// Plaintext scale used for the ct×pt measurement: as large as the default
/// scale, but small enough that the product fits under the first prime.
pub fn mul_plain_scale(params: &CkksParams) -> u32 {
    let room = params.chain_bits()[0] - 2 - params.scale_log2();
    params.scale_log2().min(room)
}

fn max_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Measures the largest slot error of each operation over `trials` random
/// vectors in `[-1, 1]^(N/2)`.
pub fn measure_noise(params: &CkksParams, trials: usize, seed: u64) -> Result<NoiseProfile, CkksError> {
    let (sk, gks) = keygen(params, &mut ChaCha20Rng::seed_from_u64(seed))?;
    let ev = Evaluator::new(params);
    let mut rng = ChaCha20Rng::seed_from_u64(seed + 1);
    let slots = params.slots();
    let mul_scale = mul_plain_scale(params);
    let mut p = NoiseProfile { encrypt: 0.0, add: 0.0, mul_plain: 0.0, rotate: 0.0 };
    for _ in 0..trials {
        let u: Vec<f64> = (0..slots).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let v: Vec<f64> = (0..slots).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let cu = sk.encrypt(&params.encode(&u)?, &mut rng)?;
        let cv = sk.encrypt(&params.encode(&v)?, &mut rng)?;
        p.encrypt = p.encrypt.max(max_err(&sk.decrypt_values(&cu)?, &u));
        let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        p.add = p.add.max(max_err(&sk.decrypt_values(&ev.add(&cu, &cv)?)?, &sum));
        let pv = params.encode_at(&v, mul_scale, params.max_level())?;
        let prod: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a * b).collect();
        p.mul_plain = p.mul_plain.max(max_err(&sk.decrypt_values(&ev.mul_plain(&cu, &pv)?)?, &prod));
        let rot: Vec<f64> = (0..slots).map(|j| u[(j + 1) % slots]).collect();
        p.rotate = p.rotate.max(max_err(&sk.decrypt_values(&ev.rotate(&cu, 1, &gks)?)?, &rot));
    }
    Ok(p)
}
