//! Latency measurements: per-operation timings, end-to-end inference, and
//! the normalization/rescale ablation. Every figure is a median over
//! samples after discarded warm-up runs; a sample is the fastest of
//! `inner` back-to-back calls, which filters out bursts of host noise.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::ckks::{
    max_admissible_scale, Ciphertext, CkksError, CkksParams, Evaluator, GaloisKeys, Plaintext, SecretKey,
};
use crate::hdc::{norm, Encoder, HdcModel, Preprocess};
use crate::protocol::{
    client_finalize, client_prepare_query, score_bound, server_similarity, similarity, ClassValues, Layout,
    ProtocolError, ServerModel,
};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BenchConfig {
    pub reps: usize,
    /// Calls per sample; the sample is the fastest of them.
    pub inner: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { reps: 5, inner: 5, warmup: 1, seed: 1 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub median_ms: f64,
    pub samples_ms: Vec<f64>,
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Shortest timed block; faster operations are repeated until a block lasts this long.
const MIN_BLOCK_MS: f64 = 2.0;

/// Milliseconds per call over the fastest of `inner` blocks of `batch` calls.
fn sample<T>(inner: usize, batch: usize, f: &mut dyn FnMut() -> T) -> f64 {
    (0..inner.max(1))
        .map(|_| {
            let t = Instant::now();
            for _ in 0..batch {
                std::hint::black_box(f());
            }
            t.elapsed().as_secs_f64() * 1e3 / batch as f64
        })
        .fold(f64::INFINITY, f64::min)
}

/// Takes `reps` samples of `f` after `warmup` untimed calls. One more
/// untimed call sizes the batch for operations shorter than a couple of
/// milliseconds.
pub fn measure<T, F: FnMut() -> T>(cfg: &BenchConfig, mut f: F) -> Timing {
    for _ in 0..cfg.warmup {
        std::hint::black_box(f());
    }
    let t = Instant::now();
    std::hint::black_box(f());
    let once = t.elapsed().as_secs_f64() * 1e3;
    let batch = (MIN_BLOCK_MS / once.max(1e-6)).ceil().clamp(1.0, 100_000.0) as usize;
    let samples_ms: Vec<f64> = (0..cfg.reps.max(1)).map(|_| sample(cfg.inner, batch, &mut f)).collect();
    Timing { median_ms: median(&samples_ms), samples_ms }
}

/// Like [`measure`] for several workloads. Calls are interleaved one by one,
/// in an order that reverses every pass, so slow drifts in machine state
/// affect all of them alike.
pub fn measure_interleaved(cfg: &BenchConfig, fs: &mut [&mut dyn FnMut()]) -> Vec<Timing> {
    for _ in 0..cfg.warmup {
        fs.iter_mut().for_each(|f| f());
    }
    let mut samples = vec![Vec::new(); fs.len()];
    let inner = cfg.inner.max(1);
    for _ in 0..cfg.reps.max(1) {
        let mut best = vec![f64::INFINITY; fs.len()];
        for j in 0..inner {
            let order: Vec<usize> = if j % 2 == 0 { (0..fs.len()).collect() } else { (0..fs.len()).rev().collect() };
            for i in order {
                let t = Instant::now();
                fs[i]();
                best[i] = best[i].min(t.elapsed().as_secs_f64() * 1e3);
            }
        }
        for (out, b) in samples.iter_mut().zip(best) {
            out.push(b);
        }
    }
    samples.into_iter().map(|s| Timing { median_ms: median(&s), samples_ms: s }).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct OpRow {
    pub params: String,
    pub log2n: u32,
    pub op: String,
    pub median_ms: f64,
    pub samples_ms: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct E2eRow {
    pub params: String,
    pub log2n: u32,
    pub hv_dim: usize,
    pub chunks: usize,
    pub classes: usize,
    /// Hypervector encoding, CKKS encoding and encryption.
    pub encrypt_ms: f64,
    pub inference_ms: f64,
    pub decrypt_ms: f64,
    pub total_ms: f64,
    pub query_bytes: usize,
    pub response_bytes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub description: String,
    pub chain_bits: Vec<u32>,
    pub normalized: bool,
    pub rescale: bool,
    pub median_ms: f64,
    pub samples_ms: Vec<f64>,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct BenchReport {
    pub suite: String,
    pub config: Option<BenchConfig>,
    pub ops: Vec<OpRow>,
    pub e2e: Vec<E2eRow>,
    pub ablation: Vec<AblationRow>,
}

fn random_unit(d: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = norm(&v);
    v.iter().map(|x| x / n).collect()
}

fn random_in_unit_box(d: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Times encode, encrypt, add, ct×pt multiply, one-step rotation, decrypt,
/// and rescale where the chain has a level to drop.
pub fn ops_suite(log2ns: &[u32], cfg: &BenchConfig) -> Result<Vec<OpRow>, CkksError> {
    let mut rows = Vec::new();
    for &log2n in log2ns {
        let params = CkksParams::standard(log2n)?;
        let label = params.label();
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        let sk = SecretKey::generate(&params, &mut rng);
        let gks = GaloisKeys::generate_steps(&sk, &[1], &mut rng)?;
        let ev = Evaluator::new(&params);
        let u = random_in_unit_box(params.slots(), &mut rng);
        let pt = params.encode(&u)?;
        let ct = sk.encrypt(&pt, &mut rng)?;
        let ct2 = sk.encrypt(&pt, &mut rng)?;
        let mscale = crate::ckks::mul_plain_scale(&params);
        let mpt = params.encode_at(&u, mscale, params.max_level())?.into_ntt();
        let mut push = |op: &str, t: Timing| {
            rows.push(OpRow { params: label.clone(), log2n, op: op.into(), median_ms: t.median_ms, samples_ms: t.samples_ms })
        };
        push("encode", measure(cfg, || params.encode(&u).expect("encode")));
        push("encrypt", measure(cfg, || sk.encrypt(&pt, &mut rng).expect("encrypt")));
        push("add", measure(cfg, || ev.add(&ct, &ct2).expect("add")));
        push("mul_ct_pt", measure(cfg, || ev.mul_plain(&ct, &mpt).expect("mul")));
        push("rotate", measure(cfg, || ev.rotate(&ct, 1, &gks).expect("rotate")));
        push("decrypt", measure(cfg, || sk.decrypt_values(&ct).expect("decrypt")));
        if let Some(chain) = rescale_chain(log2n) {
            let p3 = CkksParams::new(log2n, &chain, params.scale_log2())?;
            let sk3 = SecretKey::generate(&p3, &mut rng);
            let ev3 = Evaluator::new(&p3);
            let c3 = sk3.encrypt(&p3.encode(&u)?, &mut rng)?;
            let m3 = ev3.mul_plain(&c3, &p3.encode_at(&u, chain[1], p3.max_level())?)?;
            rows.push({
                let t = measure(cfg, || ev3.rescale(&m3).expect("rescale"));
                OpRow { params: p3.label(), log2n, op: "rescale".into(), median_ms: t.median_ms, samples_ms: t.samples_ms }
            });
        }
    }
    Ok(rows)
}

/// A three-prime chain within the security budget, for operations that
/// need a droppable level; none exists at `N = 2^11`.
pub fn rescale_chain(log2n: u32) -> Option<Vec<u32>> {
    match log2n {
        12 => Some(vec![36, 36, 36]),
        13 | 14 => Some(vec![60, 40, 60]),
        _ => None,
    }
}

/// A random normalized model: latency does not depend on the class values.
pub fn synthetic_model(classes: usize, hv_dim: usize, seed: u64) -> HdcModel {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    HdcModel { classes: (0..classes).map(|_| random_unit(hv_dim, &mut rng)).collect(), normalized: true, label_names: None }
}

/// Client encrypt, server inference and client decrypt for each `(N, D)`.
pub fn e2e_suite(
    log2ns: &[u32],
    dims: &[usize],
    classes: usize,
    input_dim: usize,
    cfg: &BenchConfig,
) -> Result<Vec<E2eRow>, ProtocolError> {
    let mut rows = Vec::new();
    for &log2n in log2ns {
        let base = CkksParams::standard(log2n)?;
        for &d in dims {
            let model = synthetic_model(classes, d, cfg.seed);
            let encoder = Encoder::with_preprocess(input_dim, d, cfg.seed, Preprocess::default());
            let values = ClassValues::Float(model.classes.clone());
            let labels = (0..classes).map(|l| l.to_string()).collect();
            let server = ServerModel::from_classes(&values, input_dim, cfg.seed, Preprocess::default(), encoder.id(), labels, &base)?;
            let params = server.params().clone();
            let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed + 1);
            let sk = SecretKey::generate(&params, &mut rng);
            let gks = GaloisKeys::generate_steps(&sk, &server.required_steps(), &mut rng)?;
            let ev = Evaluator::new(&params);
            let x: Vec<f32> = (0..input_dim).map(|_| rng.random::<f32>()).collect();
            let q = client_prepare_query(&x, &encoder, &params, &sk, &mut rng)?;
            let s = server_similarity(&q, &server, &gks, &ev)?;
            let enc_t = measure(cfg, || client_prepare_query(&x, &encoder, &params, &sk, &mut rng).expect("query"));
            let inf_t = measure(cfg, || server_similarity(&q, &server, &gks, &ev).expect("inference"));
            let dec_t = measure(cfg, || client_finalize(&s, &sk).expect("finalize"));
            rows.push(E2eRow {
                params: params.label(),
                log2n,
                hv_dim: d,
                chunks: server.layout().chunks,
                classes,
                encrypt_ms: enc_t.median_ms,
                inference_ms: inf_t.median_ms,
                decrypt_ms: dec_t.median_ms,
                total_ms: enc_t.median_ms + inf_t.median_ms + dec_t.median_ms,
                query_bytes: q.to_frame(&params).wire_len(),
                response_bytes: s.to_frame(&params).wire_len(),
            });
        }
    }
    Ok(rows)
}

/// One configuration of the ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Unnormalized classes, the cosine denominator applied as a second
    /// multiplication followed by a rescale; needs a three-prime chain.
    NoNormRescale,
    /// Unnormalized classes, second multiplication, no rescale, two primes.
    NoNormSkip,
    /// Normalized classes, one multiplication, no rescale, two primes.
    NormSkip,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::NoNormRescale, Variant::NoNormSkip, Variant::NormSkip];

    pub fn name(self) -> &'static str {
        match self {
            Variant::NoNormRescale => "a",
            Variant::NoNormSkip => "b",
            Variant::NormSkip => "c",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Variant::NoNormRescale => "no normalization, rescale, three-prime chain",
            Variant::NoNormSkip => "no normalization, rescale skipped",
            Variant::NormSkip => "normalization, rescale skipped",
        }
    }
}

/// Server state for one ablation variant.
pub struct AblationSetup {
    pub variant: Variant,
    pub params: CkksParams,
    pub layout: Layout,
    sk: Arc<SecretKey>,
    gks: Arc<GaloisKeys>,
    class_pts: Vec<Vec<Plaintext>>,
    /// `||C^l||` for the unnormalized variants, which divide by it per query.
    norms: Vec<f64>,
    inv_scale: u32,
}

impl AblationSetup {
    /// `raw` holds unnormalized class hypervectors.
    pub fn new(variant: Variant, log2n: u32, raw: &[Vec<f64>], seed: u64) -> Result<Self, CkksError> {
        Self::with_keys(variant, log2n, raw, seed, None)
    }

    /// Reuses `other`'s keys when the parameters agree, so that variants on
    /// the same chain run their rotations against the same key memory.
    fn with_keys(
        variant: Variant,
        log2n: u32,
        raw: &[Vec<f64>],
        seed: u64,
        other: Option<&AblationSetup>,
    ) -> Result<Self, CkksError> {
        let base = CkksParams::standard(log2n)?;
        let chain = match variant {
            Variant::NoNormRescale => rescale_chain(log2n).ok_or(CkksError::UnsupportedDegree(log2n))?,
            _ => base.chain_bits().to_vec(),
        };
        let params = CkksParams::new(log2n, &chain, base.scale_log2())?;
        let d = raw[0].len();
        let layout = Layout::new(d, &params);
        let norms: Vec<f64> = raw.iter().map(|c| norm(c)).collect();
        let classes: Vec<Vec<f64>> = match variant {
            Variant::NormSkip => raw.iter().zip(&norms).map(|(c, n)| c.iter().map(|x| x / n).collect()).collect(),
            _ => raw.to_vec(),
        };
        let q = params.scale_log2();
        let level = params.max_level();
        let bound = score_bound(&layout, &classes);
        let room = max_admissible_scale(&params, level, bound)
            .and_then(|r| r.checked_sub(q))
            .ok_or(CkksError::OverflowRisk { needed_bits: bound.log2() + q as f64, capacity_bits: params.capacity_bits(level) })?;
        // class scale, then the scale of the 1/||C|| factor
        let (c_scale, inv_scale) = match variant {
            Variant::NormSkip => (room.min(q), 0),
            Variant::NoNormSkip => ((room / 2).min(q), room - (room / 2).min(q)),
            Variant::NoNormRescale => {
                // the factor's scale equals the dropped prime, so the rescale removes it
                let dropped = chain[chain.len() - 2];
                (room.saturating_sub(dropped).min(q), dropped)
            }
        };
        let (sk, gks) = match other {
            Some(o) if o.params.chain_bits() == params.chain_bits() && o.layout == layout => {
                (Arc::clone(&o.sk), Arc::clone(&o.gks))
            }
            _ => {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                let sk = SecretKey::generate(&params, &mut rng);
                let steps: Vec<usize> = (0..).map(|i| 1usize << i).take_while(|&s| s < layout.chunk_len).collect();
                let gks = GaloisKeys::generate_steps(&sk, &steps, &mut rng)?;
                (Arc::new(sk), Arc::new(gks))
            }
        };
        let class_pts = classes
            .iter()
            .map(|c| {
                layout.pack_all(c).iter().map(|p| params.encode_at(p, c_scale, level).map(Plaintext::into_ntt)).collect()
            })
            .collect::<Result<Vec<Vec<_>>, _>>()?;
        Ok(AblationSetup {
            variant,
            params,
            layout,
            sk,
            gks,
            class_pts,
            norms: if variant == Variant::NormSkip { Vec::new() } else { norms },
            inv_scale,
        })
    }

    pub fn encrypt(&self, h: &[f64], rng: &mut ChaCha20Rng) -> Result<Vec<Ciphertext>, CkksError> {
        self.layout.pack_all(h).iter().map(|p| self.sk.encrypt(&self.params.encode(p)?, rng)).collect()
    }

    /// Server side: the per-class similarity, then the variant's extra steps.
    pub fn infer(&self, ev: &Evaluator, chunks: &[Ciphertext]) -> Result<Vec<Ciphertext>, CkksError> {
        let scores = similarity(ev, chunks, &self.class_pts, self.layout.chunk_len, &self.gks)?;
        if self.variant == Variant::NormSkip {
            return Ok(scores);
        }
        // ciphertext-plaintext division by ||C^l||
        let level = self.params.max_level();
        scores
            .iter()
            .zip(&self.norms)
            .map(|(s, n)| {
                let inv = self.params.encode_at(&vec![1.0 / n; self.params.slots()], self.inv_scale, level)?.into_ntt();
                let d = ev.mul_plain(s, &inv)?;
                if self.variant == Variant::NoNormRescale {
                    ev.rescale(&d)
                } else {
                    Ok(d)
                }
            })
            .collect()
    }

    pub fn decrypt(&self, scores: &[Ciphertext]) -> Result<Vec<f64>, CkksError> {
        scores.iter().map(|c| self.sk.decrypt_values(c).map(|v| v[0])).collect()
    }
}

/// End-to-end latency (encrypt, infer, decrypt) of the three variants on
/// the same random unnormalized classes and query. The reported error is
/// against the plaintext `H·C/||C||`.
pub fn ablation_suite(log2n: u32, hv_dim: usize, classes: usize, cfg: &BenchConfig) -> Result<Vec<AblationRow>, CkksError> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let raw: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            let mag = rng.random_range(4.0..16.0);
            random_unit(hv_dim, &mut rng).iter().map(|x| x * mag).collect()
        })
        .collect();
    let h = random_in_unit_box(hv_dim, &mut rng);
    let want: Vec<f64> = raw.iter().map(|c| crate::hdc::dot(c, &h) / norm(c)).collect();
    let mut setups: Vec<AblationSetup> = Vec::new();
    for &v in &Variant::ALL {
        let s = AblationSetup::with_keys(v, log2n, &raw, cfg.seed, setups.last())?;
        setups.push(s);
    }
    let mut errors = Vec::new();
    let mut runs: Vec<Box<dyn FnMut() + '_>> = Vec::new();
    for (i, s) in setups.iter().enumerate() {
        let ev = Evaluator::new(&s.params);
        let mut erng = ChaCha20Rng::seed_from_u64(cfg.seed + 7);
        let got = s.decrypt(&s.infer(&ev, &s.encrypt(&h, &mut erng)?)?)?;
        errors.push(got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        let h = &h;
        runs.push(Box::new(move || {
            let q = s.encrypt(h, &mut erng).expect("encrypt");
            let r = s.infer(&ev, &q).expect("infer");
            std::hint::black_box(s.decrypt(&r).expect("decrypt"));
        }));
        log::debug!("ablation variant {} ready ({i})", s.variant.name());
    }
    let mut refs: Vec<&mut dyn FnMut()> = runs.iter_mut().map(|b| &mut **b as &mut dyn FnMut()).collect();
    let timings = measure_interleaved(cfg, &mut refs);
    Ok(setups
        .iter()
        .zip(timings)
        .zip(errors)
        .map(|((s, t), max_abs_error)| AblationRow {
            variant: s.variant.name().into(),
            description: s.variant.description().into(),
            chain_bits: s.params.chain_bits().to_vec(),
            normalized: s.variant == Variant::NormSkip,
            rescale: s.variant == Variant::NoNormRescale,
            median_ms: t.median_ms,
            samples_ms: t.samples_ms,
            max_abs_error,
        })
        .collect())
}

/// Query size in bytes for `D` at the default parameters of `N = 2^log2n`.
pub fn query_size(log2n: u32, hv_dim: usize) -> Result<usize, CkksError> {
    let params = CkksParams::standard(log2n)?;
    let layout = Layout::new(hv_dim, &params);
    let ct = crate::ckks::ciphertext_size(&params, params.max_level(), true);
    Ok(5 + 4 + layout.chunks * (4 + ct))
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if !self.ops.is_empty() {
            out.push_str("suite,params,log2n,op,median_ms\n");
            for r in &self.ops {
                out.push_str(&format!("ops,\"{}\",{},{},{:.4}\n", r.params, r.log2n, r.op, r.median_ms));
            }
        }
        if !self.e2e.is_empty() {
            out.push_str("suite,params,log2n,hv_dim,chunks,classes,encrypt_ms,inference_ms,decrypt_ms,total_ms,query_bytes,response_bytes\n");
            for r in &self.e2e {
                out.push_str(&format!(
                    "e2e,\"{}\",{},{},{},{},{:.4},{:.4},{:.4},{:.4},{},{}\n",
                    r.params, r.log2n, r.hv_dim, r.chunks, r.classes, r.encrypt_ms, r.inference_ms, r.decrypt_ms, r.total_ms,
                    r.query_bytes, r.response_bytes
                ));
            }
        }
        if !self.ablation.is_empty() {
            out.push_str("suite,variant,chain,normalized,rescale,median_ms,max_abs_error\n");
            for r in &self.ablation {
                let chain: Vec<String> = r.chain_bits.iter().map(|b| b.to_string()).collect();
                out.push_str(&format!(
                    "ablation,{},{},{},{},{:.4},{:.3e}\n",
                    r.variant,
                    chain.join("/"),
                    r.normalized,
                    r.rescale,
                    r.median_ms,
                    r.max_abs_error
                ));
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.ops.is_empty() {
            out.push_str(&format!("{:<28} {:<10} {:>12}\n", "params", "op", "median ms"));
            for r in &self.ops {
                out.push_str(&format!("{:<28} {:<10} {:>12.3}\n", r.params, r.op, r.median_ms));
            }
        }
        if !self.e2e.is_empty() {
            out.push_str(&format!(
                "{:<28} {:>6} {:>3} {:>11} {:>12} {:>11} {:>10} {:>11}\n",
                "params", "D", "k", "encrypt ms", "inference ms", "decrypt ms", "total ms", "query bytes"
            ));
            for r in &self.e2e {
                out.push_str(&format!(
                    "{:<28} {:>6} {:>3} {:>11.3} {:>12.3} {:>11.3} {:>10.3} {:>11}\n",
                    r.params, r.hv_dim, r.chunks, r.encrypt_ms, r.inference_ms, r.decrypt_ms, r.total_ms, r.query_bytes
                ));
            }
        }
        if !self.ablation.is_empty() {
            out.push_str(&format!("{:<4} {:<46} {:<10} {:>10} {:>10}\n", "var", "description", "chain", "median ms", "max err"));
            for r in &self.ablation {
                let chain: Vec<String> = r.chain_bits.iter().map(|b| b.to_string()).collect();
                out.push_str(&format!(
                    "{:<4} {:<46} {:<10} {:>10.3} {:>10.2e}\n",
                    r.variant,
                    r.description,
                    chain.join("/"),
                    r.median_ms,
                    r.max_abs_error
                ));
            }
        }
        out
    }
}
