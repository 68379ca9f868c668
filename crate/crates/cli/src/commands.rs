use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use hehdc::bench::{ablation_suite, e2e_suite, ops_suite, BenchConfig, BenchReport};
use hehdc::ckks::{keygen, CkksParams, GaloisKeys, SecretKey};
use hehdc::dataset::{find_mnist, mnist_splits, Dataset};
use hehdc::hdc::{quantize_model, Classifier, Encoder, ModelFile, Preprocess, StoredModel, TrainConfig};
use hehdc::pipeline::{accuracy_of, agreement, encrypted_predictions, plain_predictions, search_query_scale, train};
use hehdc::protocol::{serve_listener, Client, ClientSession, Endpoint, Layout, Listener, Manifest, ProtocolError, ServerModel};

use crate::{
    BenchArgs, ClassifyArgs, Cli, Command, EvalArgs, IngestArgs, KeygenArgs, Mode, PreprocessArg, QuantizeArgs, ServeArgs,
    Source, Suite, TrainArgs, UsageError,
};

/// Dimensions explored in the reference accuracy grid.
const DIM_GRID: [usize; 4] = [2048, 4096, 8192, 10240];
const SECRET_KEY_FILE: &str = "secret.key";
const GALOIS_KEYS_FILE: &str = "galois.keys";

pub fn run(cli: &Cli) -> Result<()> {
    let report = cli.report.as_deref();
    match &cli.command {
        Command::Ingest(a) => ingest(a, cli.seed, report),
        Command::Train(a) => train_cmd(a, cli.seed, report),
        Command::Quantize(a) => quantize(a, report),
        Command::Keygen(a) => keygen_cmd(a, cli.seed),
        Command::Serve(a) => serve(a),
        Command::Classify(a) => classify(a, cli.seed, report),
        Command::Bench(a) => bench(a, cli.seed, report),
        Command::Eval(a) => eval(a, cli.seed, report),
    }
}

fn write_report<T: Serialize>(path: Option<&Path>, value: &T, csv: Option<String>) -> Result<()> {
    let Some(path) = path else { return Ok(()) };
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))?;
    if let Some(csv) = csv {
        let p = path.with_extension("csv");
        fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?;
    }
    log::info!("report written to {}", path.display());
    Ok(())
}

/// `path` itself if it is a file, else `path/<name>.heds`.
fn dataset_at(path: &Path, name: &str) -> Result<Dataset> {
    let file = if path.is_dir() { path.join(format!("{name}.heds")) } else { path.to_path_buf() };
    Dataset::load(&file).with_context(|| format!("loading {}", file.display()))
}

fn load_model(path: &Path) -> Result<ModelFile> {
    ModelFile::load(path).with_context(|| format!("loading model {}", path.display()))
}

#[derive(Serialize)]
struct IngestReport {
    source: String,
    seed: u64,
    train: usize,
    val: usize,
    test: usize,
    dim: usize,
    classes: usize,
}

fn ingest(a: &IngestArgs, seed: u64, report: Option<&Path>) -> Result<()> {
    let (train, val, test) = match a.source {
        Source::Mnist => {
            let dir = find_mnist(&a.data_dir)
                .ok_or_else(|| anyhow::anyhow!("no MNIST IDX files under {}", a.data_dir.display()))?;
            let s = mnist_splits(&dir, a.full)?;
            (s.train, s.val, s.test)
        }
        Source::Synthetic => {
            if a.classes == 0 || a.features == 0 || a.per_class < 4 {
                return Err(UsageError("synthetic data needs classes, features and at least 4 samples per class".into()).into());
            }
            let held = a.per_class / 4;
            // one draw, cut into consecutive ranges; samples cycle through the classes
            let all = Dataset::synthetic_blobs(a.classes, a.features, a.per_class + 2 * held, a.spread, seed);
            let (k, n) = (a.classes, a.per_class);
            (all.slice(0..n * k), all.slice(n * k..(n + held) * k), all.slice((n + held) * k..(n + 2 * held) * k))
        }
    };
    fs::create_dir_all(&a.out)?;
    for (name, d) in [("train", &train), ("val", &val), ("test", &test)] {
        d.save(&a.out.join(format!("{name}.heds")))?;
    }
    println!(
        "wrote {} train, {} val, {} test samples ({} features, {} classes) to {}",
        train.len(),
        val.len(),
        test.len(),
        train.dim,
        train.num_classes,
        a.out.display()
    );
    let r = IngestReport {
        source: format!("{:?}", a.source).to_lowercase(),
        seed,
        train: train.len(),
        val: val.len(),
        test: test.len(),
        dim: train.dim,
        classes: train.num_classes,
    };
    write_report(report, &r, None)
}

#[derive(Serialize)]
struct TrainReport {
    seed: u64,
    dim: usize,
    config: TrainConfig,
    train_samples: usize,
    history: Vec<f64>,
    val_accuracy: Option<f64>,
    test_accuracy: Option<f64>,
}

fn train_cmd(a: &TrainArgs, seed: u64, report: Option<&Path>) -> Result<()> {
    if !DIM_GRID.contains(&a.dim) {
        log::warn!("D = {} is outside the usual grid {:?}", a.dim, DIM_GRID);
    }
    let data = dataset_at(&a.data, "train")?;
    let preprocess = match a.preprocess {
        PreprocessArg::Identity => Preprocess::Identity,
        PreprocessArg::UnitNorm => Preprocess::default(),
    };
    let enc = Encoder::with_preprocess(data.dim, a.dim, seed, preprocess);
    let cfg = TrainConfig { learning_rate: a.lr, epochs: a.epochs, shuffle_seed: seed };
    let t = train(&enc, &data, &cfg)?;
    let eval_split = |name: &str| -> Result<Option<f64>> {
        let dir = if a.data.is_dir() { a.data.clone() } else { a.data.parent().map(Path::to_path_buf).unwrap_or_default() };
        let path = dir.join(format!("{name}.heds"));
        if !path.is_file() {
            return Ok(None);
        }
        let d = Dataset::load(&path)?;
        let hvs = enc.encode_batch(&d.features)?;
        Ok(Some(accuracy_of(&plain_predictions(&t.model, &hvs)?, &d.labels)))
    };
    let (val_accuracy, test_accuracy) = (eval_split("val")?, eval_split("test")?);
    let file = ModelFile { input_dim: data.dim, seed, preprocess, model: StoredModel::Float(t.model) };
    file.save(&a.out)?;
    if let Some(last) = t.history.last() {
        println!("training accuracy after {} epochs: {:.2}%", t.history.len(), last * 100.0);
    }
    for (name, acc) in [("validation", val_accuracy), ("test", test_accuracy)] {
        if let Some(acc) = acc {
            println!("{name} accuracy: {:.2}%", acc * 100.0);
        }
    }
    println!("model written to {}", a.out.display());
    let r = TrainReport { seed, dim: a.dim, config: cfg, train_samples: data.len(), history: t.history, val_accuracy, test_accuracy };
    write_report(report, &r, None)
}

#[derive(Serialize)]
struct QuantizeReport {
    bits: u32,
    params: String,
    plain_val_accuracy: f64,
    quantized_val_accuracy: f64,
    best_query_scale_log2: u32,
    search: Vec<(u32, Option<f64>)>,
}

fn quantize(a: &QuantizeArgs, report: Option<&Path>) -> Result<()> {
    let file = load_model(&a.model)?;
    let StoredModel::Float(model) = &file.model else {
        return Err(UsageError(format!("{} is already quantized", a.model.display())).into());
    };
    let params = a.params.build()?;
    let q = quantize_model(model, a.bits)?;
    let val = dataset_at(&a.data, "val")?;
    let hvs = file.encoder().encode_batch(&val.features)?;
    let grid: Vec<u32> = if a.grid.is_empty() {
        (2..params.chain_bits()[0]).step_by(2).collect()
    } else {
        a.grid.clone()
    };
    let (best, search) = search_query_scale(&params, &q.classes_f64(), &hvs, &val.labels, &grid)?;
    let plain_val_accuracy = accuracy_of(&plain_predictions(model, &hvs)?, &val.labels);
    let quantized_val_accuracy = accuracy_of(&plain_predictions(&q, &hvs)?, &val.labels);
    let out = ModelFile { model: StoredModel::Quantized(q), ..file.clone() };
    out.save(&a.out)?;
    for (s, acc) in &search {
        match acc {
            Some(acc) => println!("  query scale 2^{s:<3} {:.2}%", acc * 100.0),
            None => println!("  query scale 2^{s:<3} overflows"),
        }
    }
    let chain: Vec<String> = params.chain_bits().iter().map(|b| b.to_string()).collect();
    println!(
        "{}-bit model: validation {:.2}% (float {:.2}%); best query scale 2^{best}, serve with --params {}:{}:{best}",
        a.bits,
        quantized_val_accuracy * 100.0,
        plain_val_accuracy * 100.0,
        params.log2n(),
        chain.join(",")
    );
    let r = QuantizeReport {
        bits: a.bits,
        params: params.label(),
        plain_val_accuracy,
        quantized_val_accuracy,
        best_query_scale_log2: best,
        search,
    };
    write_report(report, &r, None)
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    Ok(Manifest::from_json(&text)?)
}

fn keygen_cmd(a: &KeygenArgs, seed: u64) -> Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (sk, gks) = match (&a.source.manifest, &a.source.params) {
        (Some(m), _) => {
            let manifest = read_manifest(m)?;
            let params = manifest.params()?;
            let layout = Layout::new(manifest.hv_dim, &params);
            let steps: Vec<usize> = (0..).map(|i| 1usize << i).take_while(|&s| s < layout.chunk_len).collect();
            let sk = SecretKey::generate(&params, &mut rng);
            let gks = GaloisKeys::generate_steps(&sk, &steps, &mut rng)?;
            (sk, gks)
        }
        (None, Some(p)) => keygen(&p.build()?, &mut rng)?,
        (None, None) => return Err(UsageError("give --manifest or --params".into()).into()),
    };
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join(SECRET_KEY_FILE), sk.to_bytes())?;
    let gk_bytes = gks.to_bytes();
    fs::write(a.out.join(GALOIS_KEYS_FILE), &gk_bytes)?;
    let steps: Vec<String> = gks.steps().map(|s| s.to_string()).collect();
    println!(
        "keys for {} written to {} (rotation steps {}; {} bytes of rotation keys)",
        sk.params().label(),
        a.out.display(),
        steps.join(","),
        gk_bytes.len()
    );
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<()> {
    let file = load_model(&a.model)?;
    let params = a.params.build()?;
    let model = ServerModel::new(&file, &params)?;
    fs::write(&a.manifest_out, model.manifest().to_json())
        .with_context(|| format!("writing {}", a.manifest_out.display()))?;
    let endpoint: Endpoint = a.endpoint.parse().map_err(|e: String| UsageError(e))?;
    let listener = Listener::bind(&endpoint).map_err(ProtocolError::from)?;
    let bound = listener.endpoint().map_err(ProtocolError::from)?;
    println!("listening on {bound} ({}, manifest {})", model.params().label(), a.manifest_out.display());
    std::io::stdout().flush()?;
    serve_listener(listener, Arc::new(model), a.max_connections)?;
    Ok(())
}

fn load_keys(dir: &Path, params: &CkksParams) -> Result<(SecretKey, GaloisKeys)> {
    let read = |name: &str| fs::read(dir.join(name)).with_context(|| format!("reading {}", dir.join(name).display()));
    let sk = SecretKey::from_bytes(&read(SECRET_KEY_FILE)?, params)?;
    let gks = GaloisKeys::from_bytes(&read(GALOIS_KEYS_FILE)?, params)?;
    Ok((sk, gks))
}

#[derive(Serialize)]
struct ClassifyResult {
    index: usize,
    label: usize,
    true_label: usize,
    plain_label: Option<usize>,
    scores: Vec<f64>,
}

#[derive(Serialize)]
struct ClassifyReport {
    params: String,
    query_bytes: usize,
    response_bytes: usize,
    results: Vec<ClassifyResult>,
}

fn classify(a: &ClassifyArgs, seed: u64, report: Option<&Path>) -> Result<()> {
    let manifest = read_manifest(&a.manifest)?;
    let params = manifest.params()?;
    let (sk, gks) = load_keys(&a.keys, &params)?;
    let session = ClientSession::new(&manifest, sk, gks)?;
    let data = dataset_at(&a.data, "test")?;
    if data.dim != manifest.input_dim {
        return Err(UsageError(format!("samples have {} features, the server expects {}", data.dim, manifest.input_dim)).into());
    }
    let end = a.index.saturating_add(a.count).min(data.len());
    if a.index >= end {
        return Err(UsageError(format!("index {} is outside the {} samples", a.index, data.len())).into());
    }
    let plain = a.model.as_deref().map(load_model).transpose()?;
    let endpoint: Endpoint = a.endpoint.parse().map_err(|e: String| UsageError(e))?;
    let stream = endpoint.connect().map_err(ProtocolError::from)?;
    let mut client = Client::connect(stream, session, seed)?;
    let mut results = Vec::new();
    for i in a.index..end {
        let x = data.sample(i);
        let (label, scores) = client.classify(x)?;
        let plain_label = match &plain {
            Some(m) => Some(plain_label(m, x)?),
            None => None,
        };
        let name = manifest.classes.get(label).cloned().unwrap_or_else(|| label.to_string());
        let shown: Vec<String> = scores.iter().map(|s| format!("{s:.4}")).collect();
        print!("sample {i}: label {name} (true {})", data.labels[i]);
        if let Some(p) = plain_label {
            print!(", plaintext {p}");
        }
        println!(" scores [{}]", shown.join(", "));
        results.push(ClassifyResult { index: i, label, true_label: data.labels[i], plain_label, scores });
    }
    let (query_bytes, response_bytes) = client.last_message_sizes();
    println!("query {query_bytes} bytes, response {response_bytes} bytes");
    if plain.is_some() {
        let enc: Vec<usize> = results.iter().map(|r| r.label).collect();
        let pl: Vec<usize> = results.iter().filter_map(|r| r.plain_label).collect();
        println!("agreement with plaintext: {:.2}%", agreement(&enc, &pl) * 100.0);
    }
    let r = ClassifyReport { params: params.label(), query_bytes, response_bytes, results };
    write_report(report, &r, None)
}

fn plain_label(file: &ModelFile, x: &[f32]) -> Result<usize> {
    let h = file.encoder().encode(x)?;
    let label = match &file.model {
        StoredModel::Float(m) => m.classify(&h)?.0,
        StoredModel::Quantized(q) => q.classify(&h)?.0,
    };
    Ok(label)
}

fn bench(a: &BenchArgs, seed: u64, report: Option<&Path>) -> Result<()> {
    let cfg = BenchConfig { reps: a.reps, inner: a.inner, warmup: a.warmup, seed };
    let mut r = BenchReport { suite: format!("{:?}", a.suite).to_lowercase(), config: Some(cfg), ..Default::default() };
    if matches!(a.suite, Suite::Ops | Suite::All) {
        r.ops = ops_suite(&a.params_grid, &cfg)?;
    }
    if matches!(a.suite, Suite::E2e | Suite::All) {
        r.e2e = e2e_suite(&a.params_grid, &a.dims, a.classes, a.input_dim, &cfg)?;
    }
    if matches!(a.suite, Suite::Ablation | Suite::All) {
        r.ablation = ablation_suite(a.ablation_n, a.ablation_dim, a.classes, &cfg)?;
    }
    print!("{}", r.to_text());
    let path = report.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(format!("bench_{}.json", r.suite)));
    write_report(Some(&path), &r, Some(r.to_csv()))?;
    println!("report: {} (+ .csv)", path.display());
    Ok(())
}

#[derive(Clone, Serialize)]
struct EvalRow {
    model: String,
    mode: String,
    log2n: Option<u32>,
    hv_dim: usize,
    /// 0 for the floating-point model.
    bits: u32,
    samples: usize,
    accuracy: Option<f64>,
    query_scale_log2: Option<u32>,
    class_scale_log2: Option<u32>,
    error: Option<String>,
}

fn eval(a: &EvalArgs, seed: u64, report: Option<&Path>) -> Result<()> {
    if let Some(&b) = a.bits_grid.iter().find(|&&b| b == 1 || b > 32) {
        return Err(UsageError(format!("unsupported class width {b}")).into());
    }
    let data = dataset_at(&a.data, "test")?;
    let data = match a.count {
        Some(c) => data.slice(0..c.min(data.len())),
        None => data,
    };
    let mut rows = Vec::new();
    for path in &a.model {
        let file = load_model(path)?;
        let hvs = file.encoder().encode_batch(&data.features)?;
        let variants: Vec<(u32, StoredModel)> = match &file.model {
            StoredModel::Float(m) => a
                .bits_grid
                .iter()
                .map(|&b| Ok((b, if b == 0 { StoredModel::Float(m.clone()) } else { StoredModel::Quantized(quantize_model(m, b)?) })))
                .collect::<Result<_>>()?,
            StoredModel::Quantized(q) => vec![(q.bits, StoredModel::Quantized(q.clone()))],
        };
        for (bits, model) in variants {
            let base = EvalRow {
                model: path.display().to_string(),
                mode: format!("{:?}", a.mode).to_lowercase(),
                log2n: None,
                hv_dim: model.dim(),
                bits,
                samples: data.len(),
                accuracy: None,
                query_scale_log2: None,
                class_scale_log2: None,
                error: None,
            };
            match a.mode {
                Mode::Plain => {
                    let pred = match &model {
                        StoredModel::Float(m) => plain_predictions(m, &hvs)?,
                        StoredModel::Quantized(q) => plain_predictions(q, &hvs)?,
                    };
                    rows.push(EvalRow { accuracy: Some(accuracy_of(&pred, &data.labels)), ..base });
                }
                Mode::Encrypted => {
                    for &log2n in &a.params_grid {
                        let row = EvalRow { log2n: Some(log2n), ..base.clone() };
                        rows.push(encrypted_row(row, &file, model.clone(), log2n, &hvs, &data.labels, seed)?);
                    }
                }
            }
        }
    }
    println!("{:<8} {:>6} {:>6} {:>5} {:>8} {:>10}", "mode", "N", "D", "bits", "samples", "accuracy");
    for r in &rows {
        let n = r.log2n.map_or("-".to_string(), |n| format!("2^{n}"));
        let acc = match (&r.accuracy, &r.error) {
            (Some(a), _) => format!("{:.2}%", a * 100.0),
            (None, Some(e)) => format!("error: {e}"),
            _ => "-".into(),
        };
        println!("{:<8} {:>6} {:>6} {:>5} {:>8} {:>10}", r.mode, n, r.hv_dim, r.bits, r.samples, acc);
    }
    let mut csv = String::from("model,mode,log2n,hv_dim,bits,samples,accuracy,query_scale_log2,class_scale_log2\n");
    for r in &rows {
        let opt = |v: Option<String>| v.unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.model,
            r.mode,
            opt(r.log2n.map(|n| n.to_string())),
            r.hv_dim,
            r.bits,
            r.samples,
            opt(r.accuracy.map(|a| format!("{a:.6}"))),
            opt(r.query_scale_log2.map(|n| n.to_string())),
            opt(r.class_scale_log2.map(|n| n.to_string())),
        ));
    }
    write_report(report, &rows, Some(csv))
}

fn encrypted_row(
    row: EvalRow,
    file: &ModelFile,
    model: StoredModel,
    log2n: u32,
    hvs: &[Vec<f64>],
    labels: &[usize],
    seed: u64,
) -> Result<EvalRow> {
    let params = CkksParams::standard(log2n)?;
    let server_file = ModelFile { model, ..file.clone() };
    let server = match ServerModel::new(&server_file, &params) {
        Ok(s) => s,
        // a model that cannot fit this degree is a grid result, not a failure
        Err(e) => return Ok(EvalRow { error: Some(e.to_string()), ..row }),
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sk = SecretKey::generate(server.params(), &mut rng);
    let gks = GaloisKeys::generate_steps(&sk, &server.required_steps(), &mut rng)?;
    let pred: Vec<usize> = encrypted_predictions(&server, &sk, &gks, hvs, seed + 1)?.into_iter().map(|p| p.0).collect();
    let m = server.manifest();
    if pred.is_empty() {
        bail!("no samples to evaluate");
    }
    Ok(EvalRow {
        accuracy: Some(accuracy_of(&pred, labels)),
        query_scale_log2: Some(m.query_scale_log2),
        class_scale_log2: Some(m.class_scale_log2),
        ..row
    })
}
