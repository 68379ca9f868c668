//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Pass criterion ids (`A1`, `A7`, ...)
//! as arguments to run a subset.
//!
//! MNIST is read from `HEHDC_DATA_DIR` (or `data/` at the workspace root).

use std::error::Error;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use hehdc::bench::{ablation_suite, e2e_suite, ops_suite, synthetic_model, BenchConfig, BenchReport};
use hehdc::ckks::{
    modulus_budget, mul_plain_scale, tolerances, CkksError, CkksParams, Evaluator, GaloisKeys, SecretKey,
};
use hehdc::dataset::{find_mnist, mnist_splits, Splits};
use hehdc::hdc::{quantize_model, Encoder, HdcModel, ModelFile, Preprocess, StoredModel, TrainConfig};
use hehdc::pipeline::{accuracy_of, agreement, encrypted_predictions, plain_predictions, train};
use hehdc::protocol::{encrypt_hypervector, server_similarity, ClassValues, ServerModel};

type Res = Result<(bool, String), Box<dyn Error>>;

const INPUT_DIM: usize = 784;
const ENCODER_SEED: u64 = 1;

fn data_dir() -> Option<PathBuf> {
    let root = std::env::var_os("HEHDC_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"));
    find_mnist(&root)
}

struct Mnist {
    splits: Splits,
    models: Vec<(usize, Encoder, HdcModel, f64)>,
}

impl Mnist {
    fn load() -> Result<Self, Box<dyn Error>> {
        let dir = data_dir().ok_or("MNIST not found; set HEHDC_DATA_DIR")?;
        Ok(Mnist { splits: mnist_splits(&dir, false)?, models: Vec::new() })
    }

    /// Trained model for `d` plus its plaintext test accuracy, trained once.
    fn model(&mut self, d: usize) -> Result<(Encoder, HdcModel, f64), Box<dyn Error>> {
        if let Some((_, e, m, a)) = self.models.iter().find(|m| m.0 == d) {
            return Ok((e.clone(), m.clone(), *a));
        }
        let enc = Encoder::with_preprocess(INPUT_DIM, d, ENCODER_SEED, Preprocess::default());
        let t = train(&enc, &self.splits.train, &TrainConfig::default())?;
        let hvs = enc.encode_batch(&self.splits.test.features)?;
        let acc = accuracy_of(&plain_predictions(&t.model, &hvs)?, &self.splits.test.labels);
        self.models.push((d, enc.clone(), t.model.clone(), acc));
        Ok((enc, t.model, acc))
    }

    fn test_hvs(&self, enc: &Encoder, count: usize) -> Result<(Vec<Vec<f64>>, Vec<usize>), Box<dyn Error>> {
        let t = self.splits.test.slice(0..count.min(self.splits.test.len()));
        Ok((enc.encode_batch(&t.features)?, t.labels))
    }
}

struct Ctx {
    mnist: Option<Mnist>,
}

impl Ctx {
    fn mnist(&mut self) -> Result<&mut Mnist, Box<dyn Error>> {
        if self.mnist.is_none() {
            self.mnist = Some(Mnist::load()?);
        }
        Ok(self.mnist.as_mut().expect("loaded"))
    }
}

fn max_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn server_for(model: StoredModel, log2n: u32) -> Result<ServerModel, Box<dyn Error>> {
    let file = ModelFile { input_dim: INPUT_DIM, seed: ENCODER_SEED, preprocess: Preprocess::default(), model };
    Ok(ServerModel::new(&file, &CkksParams::standard(log2n)?)?)
}

fn encrypted_labels(server: &ServerModel, hvs: &[Vec<f64>], seed: u64) -> Result<Vec<usize>, Box<dyn Error>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sk = SecretKey::generate(server.params(), &mut rng);
    let gks = GaloisKeys::generate_steps(&sk, &server.required_steps(), &mut rng)?;
    Ok(encrypted_predictions(server, &sk, &gks, hvs, seed + 1)?.into_iter().map(|p| p.0).collect())
}

fn a1(_: &mut Ctx) -> Res {
    let mut pass = true;
    let mut detail = Vec::new();
    for log2n in 11..=14u32 {
        let params = CkksParams::standard(log2n)?;
        let tol = tolerances(log2n).ok_or("no tolerance")?;
        let mut rng = ChaCha20Rng::seed_from_u64(1000 + log2n as u64);
        let sk = SecretKey::generate(&params, &mut rng);
        let gks = GaloisKeys::generate_steps(&sk, &[1], &mut rng)?;
        let ev = Evaluator::new(&params);
        let slots = params.slots();
        let ms = mul_plain_scale(&params);
        let (mut e_enc, mut e_add, mut e_mul, mut e_rot) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut permutation = true;
        for _ in 0..100 {
            let u: Vec<f64> = (0..slots).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let v: Vec<f64> = (0..slots).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let cu = sk.encrypt(&params.encode(&u)?, &mut rng)?;
            let cv = sk.encrypt(&params.encode(&v)?, &mut rng)?;
            e_enc = e_enc.max(max_err(&sk.decrypt_values(&cu)?, &u));
            let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
            e_add = e_add.max(max_err(&sk.decrypt_values(&ev.add(&cu, &cv)?)?, &sum));
            let prod: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a * b).collect();
            let pv = params.encode_at(&v, ms, params.max_level())?;
            e_mul = e_mul.max(max_err(&sk.decrypt_values(&ev.mul_plain(&cu, &pv)?)?, &prod));
            let got = sk.decrypt_values(&ev.rotate(&cu, 1, &gks)?)?;
            let shifted: Vec<f64> = (0..slots).map(|j| u[(j + 1) % slots]).collect();
            let err = max_err(&got, &shifted);
            e_rot = e_rot.max(err);
            // every slot must be closest to its shifted source
            permutation &= got.iter().zip(&shifted).all(|(g, s)| (g - s).abs() <= tol.rotate);
        }
        let ok = e_enc <= tol.encrypt && e_add <= tol.add && e_mul <= tol.mul_plain && e_rot <= tol.rotate && permutation;
        pass &= ok;
        detail.push(format!(
            "2^{log2n}: enc {e_enc:.1e}/{:.1e} add {e_add:.1e}/{:.1e} mul {e_mul:.1e}/{:.1e} rot {e_rot:.1e}/{:.1e}",
            tol.encrypt, tol.add, tol.mul_plain, tol.rotate
        ));
    }
    Ok((pass, detail.join("; ")))
}

fn a2(_: &mut Ctx) -> Res {
    let params = CkksParams::standard(13)?;
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let sk = SecretKey::generate(&params, &mut rng);
    let steps: Vec<usize> = (0..12).map(|i| 1 << i).collect();
    let gks = GaloisKeys::generate_steps(&sk, &steps, &mut rng)?;
    let ev = Evaluator::new(&params);
    let u: Vec<f64> = (0..params.slots()).map(|_| rng.random_range(0.0..1.0)).collect();
    let ct = sk.encrypt(&params.encode(&u)?, &mut rng)?;
    let mut pass = true;
    let mut detail = Vec::new();
    for n in [4usize, 64, 1024, 4096] {
        ev.reset_counts();
        let got = sk.decrypt_values(&ev.reduce_sum(&ct, n, &gks)?)?[0];
        let counts = ev.counts();
        let want: f64 = u[..n].iter().sum();
        let rel = (got - want).abs() / want.abs();
        let log2n = n.trailing_zeros() as u64;
        let ok = rel <= 1e-3 && counts.rotate == log2n && counts.add == log2n;
        pass &= ok;
        detail.push(format!("n={n}: rel {rel:.1e}, {} rotations, {} additions", counts.rotate, counts.add));
    }
    Ok((pass, detail.join("; ")))
}

fn a3(_: &mut Ctx) -> Res {
    let accept: [(u32, Vec<u32>); 4] = [
        (11, vec![27, 27]),
        (12, vec![54, 55]),
        (13, vec![60, 60, 60, 38]),
        (14, vec![60, 60, 60, 60, 60, 60, 58, 20]),
    ];
    let reject: [(u32, Vec<u32>); 5] = [
        (11, vec![27, 28]),
        (11, vec![54, 54]),
        (12, vec![55, 55]),
        (13, vec![60, 60, 60, 39]),
        (14, vec![60, 60, 60, 60, 60, 60, 59, 20]),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (log2n, chain) in &accept {
        let total: u32 = chain.iter().sum();
        let ok = modulus_budget(*log2n) == Some(total) && CkksParams::new(*log2n, chain, 20).is_ok();
        pass &= ok;
        detail.push(format!("accept ({log2n},{total}) {ok}"));
    }
    for (log2n, chain) in &reject {
        let ok = matches!(CkksParams::new(*log2n, chain, 20), Err(CkksError::SecurityBudgetExceeded { .. }));
        pass &= ok;
        detail.push(format!("reject ({log2n},{:?}) {ok}", chain));
    }
    for log2n in [10u32, 15] {
        let ok = CkksParams::new(log2n, &[27, 27], 20).is_err();
        pass &= ok;
        detail.push(format!("reject 2^{log2n} {ok}"));
    }
    Ok((pass, detail.join("; ")))
}

fn a4(ctx: &mut Ctx) -> Res {
    let m = ctx.mnist()?;
    let (_, _, acc) = m.model(2048)?;
    Ok((acc >= 0.90, format!("test accuracy {:.2}% on {} samples (D=2048, 20 epochs)", acc * 100.0, m.splits.test.len())))
}

fn a5(ctx: &mut Ctx) -> Res {
    let m = ctx.mnist()?;
    let (enc, model, _) = m.model(2048)?;
    let q = quantize_model(&model, 16)?;
    let (hvs, _) = m.test_hvs(&enc, 200)?;
    let server = server_for(StoredModel::Quantized(q.clone()), 13)?;
    let plain = plain_predictions(&q, &hvs)?;
    let encrypted = encrypted_labels(&server, &hvs, 5)?;
    let a = agreement(&encrypted, &plain);
    let man = server.manifest();
    Ok((
        a >= 0.99,
        format!(
            "agreement {:.2}% over {} queries (query 2^{}, class 2^{})",
            a * 100.0,
            hvs.len(),
            man.query_scale_log2,
            man.class_scale_log2
        ),
    ))
}

fn a6(ctx: &mut Ctx) -> Res {
    let m = ctx.mnist()?;
    let (enc, model, _) = m.model(2048)?;
    let (hvs, labels) = m.test_hvs(&enc, 200)?;
    let plain = accuracy_of(&plain_predictions(&model, &hvs)?, &labels);
    let s11 = server_for(StoredModel::Float(model.clone()), 11)?;
    let acc11 = accuracy_of(&encrypted_labels(&s11, &hvs, 6)?, &labels);
    let s13 = server_for(StoredModel::Float(model), 13)?;
    let acc13 = accuracy_of(&encrypted_labels(&s13, &hvs, 7)?, &labels);
    Ok((
        acc11 < 0.20 && acc13 >= plain - 0.005,
        format!(
            "plaintext {:.2}%, N=2^11 {:.2}% (class 2^{}), N=2^13 {:.2}% (class 2^{})",
            plain * 100.0,
            acc11 * 100.0,
            s11.manifest().class_scale_log2,
            acc13 * 100.0,
            s13.manifest().class_scale_log2
        ),
    ))
}

fn a7(_: &mut Ctx) -> Res {
    let rows = ablation_suite(13, 4096, 10, &BenchConfig::default())?;
    let (a, b, c) = (rows[0].median_ms, rows[1].median_ms, rows[2].median_ms);
    Ok((
        a > 1.03 * b && b > 1.03 * c,
        format!("(a) {a:.1} ms, (b) {b:.1} ms, (c) {c:.1} ms; a/b {:.3}, b/c {:.3}", a / b, b / c),
    ))
}

fn a8(_: &mut Ctx) -> Res {
    let cfg = BenchConfig::default();
    let ns = [11u32, 12, 13];
    let ops = ops_suite(&ns, &cfg)?;
    let mut pass = true;
    let mut detail = Vec::new();
    let names: Vec<String> = ops.iter().map(|r| r.op.clone()).fold(Vec::new(), |mut v, o| {
        if !v.contains(&o) {
            v.push(o);
        }
        v
    });
    for op in &names {
        let series: Vec<(u32, f64)> = ops.iter().filter(|r| &r.op == op).map(|r| (r.log2n, r.median_ms)).collect();
        let increasing = series.windows(2).all(|w| w[1].1 > w[0].1);
        pass &= increasing && series.len() >= 2;
        let s: Vec<String> = series.iter().map(|(n, t)| format!("2^{n} {t:.3}")).collect();
        detail.push(format!("{op}: {}", s.join(" < ")));
    }
    let dims = [2048usize, 8192];
    let e2e = e2e_suite(&ns, &dims, 10, INPUT_DIM, &cfg)?;
    let total = |n: u32, d: usize| e2e.iter().find(|r| r.log2n == n && r.hv_dim == d).map(|r| r.total_ms).unwrap_or(f64::NAN);
    for &d in &dims {
        let inc = ns.windows(2).all(|w| total(w[1], d) > total(w[0], d));
        pass &= inc;
        let s: Vec<String> = ns.iter().map(|&n| format!("2^{n} {:.1}", total(n, d))).collect();
        detail.push(format!("e2e D={d}: {} ms", s.join(" < ")));
    }
    let spread = |v: Vec<f64>| v.iter().cloned().fold(f64::MIN, f64::max) / v.iter().cloned().fold(f64::MAX, f64::min);
    let across_d = ns.iter().map(|&n| spread(dims.iter().map(|&d| total(n, d)).collect())).fold(f64::MIN, f64::max);
    let across_n = dims.iter().map(|&d| spread(ns.iter().map(|&n| total(n, d)).collect())).fold(f64::MAX, f64::min);
    pass &= across_d < across_n;
    detail.push(format!("spread across D {across_d:.2}x < across N {across_n:.2}x"));
    let report = BenchReport { suite: "acceptance".into(), config: Some(cfg), ops, e2e, ablation: Vec::new() };
    if let Ok(dir) = std::env::var("HEHDC_REPORT_DIR") {
        std::fs::write(PathBuf::from(&dir).join("acceptance_bench.json"), report.to_json())?;
    }
    Ok((pass, detail.join("; ")))
}

fn a9(_: &mut Ctx) -> Res {
    let mut pass = true;
    let mut detail = Vec::new();
    for (log2n, d) in [(13u32, 2048usize), (12, 8192)] {
        let classes = 10;
        let model = synthetic_model(classes, d, 9);
        let enc = Encoder::with_preprocess(INPUT_DIM, d, 9, Preprocess::default());
        let labels = (0..classes).map(|l| l.to_string()).collect();
        let server = ServerModel::from_classes(
            &ClassValues::Float(model.classes.clone()),
            INPUT_DIM,
            9,
            Preprocess::default(),
            enc.id(),
            labels,
            &CkksParams::standard(log2n)?,
        )?;
        let params = server.params();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let sk = SecretKey::generate(params, &mut rng);
        let gks = GaloisKeys::generate_steps(&sk, &server.required_steps(), &mut rng)?;
        let ev = Evaluator::new(params);
        let q = encrypt_hypervector(&model.classes[0], params, &sk, &mut rng)?;
        let s = server_similarity(&q, &server, &gks, &ev)?;
        let c = ev.counts();
        let layout = server.layout();
        let (k, r) = (layout.chunks as u64, layout.chunk_len.trailing_zeros() as u64);
        let l = classes as u64;
        let depth = s.scores.iter().map(|c| c.mul_depth()).max().unwrap_or(0);
        let ok = c.mul_plain == l * k && c.rescale == 0 && depth <= 1 && c.rotate == l * r && c.add == l * (k - 1 + r);
        pass &= ok;
        detail.push(format!(
            "N=2^{log2n} D={d} k={k}: {} mul_ct_pt, {} rotations, {} additions, {} rescales, max depth {depth}",
            c.mul_plain, c.rotate, c.add, c.rescale
        ));
    }
    Ok((pass, detail.join("; ")))
}

fn a10(ctx: &mut Ctx) -> Res {
    let m = ctx.mnist()?;
    let (enc, model, _) = m.model(4096)?;
    let q = quantize_model(&model, 16)?;
    let (hvs, _) = m.test_hvs(&enc, 100)?;
    let s13 = server_for(StoredModel::Quantized(q.clone()), 13)?;
    let s12 = server_for(StoredModel::Quantized(q), 12)?;
    let (k13, k12) = (s13.layout().chunks, s12.layout().chunks);
    let a = agreement(&encrypted_labels(&s13, &hvs, 10)?, &encrypted_labels(&s12, &hvs, 11)?);
    Ok((
        a >= 0.99 && k13 == 1 && k12 == 2,
        format!("agreement {:.2}% over {} queries (k={k13} at 2^13, k={k12} at 2^12)", a * 100.0, hvs.len()),
    ))
}

fn main() {
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).map(|a| a.to_uppercase()).collect();
    let criteria: [(&str, fn(&mut Ctx) -> Res); 10] = [
        ("A1", a1),
        ("A2", a2),
        ("A3", a3),
        ("A4", a4),
        ("A5", a5),
        ("A6", a6),
        ("A7", a7),
        ("A8", a8),
        ("A9", a9),
        ("A10", a10),
    ];
    let mut ctx = Ctx { mnist: None };
    let mut failed = 0;
    for (id, f) in criteria {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == id) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = f(&mut ctx).unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!pass);
        println!("{id} {} [{:.1}s] {detail}", if pass { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
