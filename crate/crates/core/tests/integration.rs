use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use hehdc::bench::synthetic_model;
use hehdc::ckks::{CkksParams, Evaluator, GaloisKeys, SecretKey};
use hehdc::dataset::{find_mnist, mnist_splits, Dataset};
use hehdc::hdc::{dot, quantize_model, Encoder, HdcModel, ModelFile, Preprocess, StoredModel, TrainConfig};
use hehdc::pipeline::{accuracy_of, plain_predictions, train, train_encoded};
use hehdc::protocol::{
    client_finalize, encrypt_hypervector, serve_listener, server_similarity, Client, ClientSession, ClassValues,
    Endpoint, Listener, ServerModel,
};

#[test]
fn server_code_never_touches_the_secret_key() {
    let src = include_str!("../src/protocol/server.rs");
    assert!(!src.contains("SecretKey"));
    assert!(!src.to_lowercase().contains("decrypt"));
}

fn blob_model(bits: u32) -> (Encoder, Dataset, ModelFile) {
    let data = Dataset::synthetic_blobs(4, 10, 50, 0.15, 8);
    let enc = Encoder::new(10, 1024, 3);
    let t = train(&enc, &data, &TrainConfig { epochs: 3, ..Default::default() }).unwrap();
    let model = StoredModel::Quantized(quantize_model(&t.model, bits).unwrap());
    (enc, data, ModelFile { input_dim: 10, seed: 3, preprocess: Preprocess::default(), model })
}

#[test]
fn tcp_session_matches_plaintext_decisions() {
    let (enc, data, file) = blob_model(16);
    let server = Arc::new(ServerModel::new(&file, &CkksParams::standard(12).unwrap()).unwrap());
    let listener = Listener::bind(&"127.0.0.1:0".parse::<Endpoint>().unwrap()).unwrap();
    let endpoint = listener.endpoint().unwrap();
    let handle = {
        let server = Arc::clone(&server);
        std::thread::spawn(move || serve_listener(listener, server, Some(1)))
    };
    let manifest = server.manifest().clone();
    let params = manifest.params().unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let sk = SecretKey::generate(&params, &mut rng);
    let gks = GaloisKeys::generate_steps(&sk, &server.required_steps(), &mut rng).unwrap();
    let session = ClientSession::new(&manifest, sk, gks).unwrap();
    let mut client = Client::connect(endpoint.connect().unwrap(), session, 5).unwrap();
    let StoredModel::Quantized(q) = &file.model else { unreachable!() };
    for i in 0..12 {
        let x = data.sample(i * 7);
        let (label, scores) = client.classify(x).unwrap();
        let plain = plain_predictions(q, &[enc.encode(x).unwrap()]).unwrap()[0];
        assert_eq!(label, plain);
        assert_eq!(scores.len(), 4);
    }
    let (query, response) = client.last_message_sizes();
    assert!(query > 0 && response > 0);
    drop(client);
    handle.join().unwrap().unwrap();
}

#[test]
fn encrypted_scores_match_plain_dot_products_at_8192() {
    let model = synthetic_model(10, 2048, 11);
    let enc = Encoder::new(4, 2048, 11);
    let server = ServerModel::from_classes(
        &ClassValues::Float(model.classes.clone()),
        4,
        11,
        Preprocess::default(),
        enc.id(),
        (0..10).map(|l| l.to_string()).collect(),
        &CkksParams::standard(13).unwrap(),
    )
    .unwrap();
    let params = server.params();
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let sk = SecretKey::generate(params, &mut rng);
    let gks = GaloisKeys::generate_steps(&sk, &server.required_steps(), &mut rng).unwrap();
    let ev = Evaluator::new(params);
    for trial in 0..3 {
        // a query leaning towards one class so that scores are well away from zero
        let h: Vec<f64> = model.classes[trial]
            .iter()
            .map(|c| (c * 20.0 + rng.random_range(-0.5..0.5)).clamp(-1.0, 1.0))
            .collect();
        let q = encrypt_hypervector(&h, params, &sk, &mut rng).unwrap();
        let (label, got) = client_finalize(&server_similarity(&q, &server, &gks, &ev).unwrap(), &sk).unwrap();
        let want: Vec<f64> = model.classes.iter().map(|c| dot(&h, c)).collect();
        let scale = want.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-3 * scale, "{g} vs {w}");
        }
        assert_eq!(label, trial);
    }
}

fn mnist_dir() -> Option<PathBuf> {
    let root = std::env::var_os("HEHDC_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"));
    let dir = find_mnist(&root);
    if dir.is_none() {
        eprintln!("MNIST not found under {}; skipping", root.display());
    }
    dir
}

#[test]
fn mnist_training_accuracy_rises_over_the_first_epochs() {
    let Some(dir) = mnist_dir() else { return };
    let train_set = mnist_splits(&dir, false).unwrap().train;
    let mut monotone = 0;
    let mut curves = Vec::new();
    for seed in 0..5u64 {
        let enc = Encoder::with_preprocess(784, 2048, seed, Preprocess::default());
        let hvs = enc.encode_batch(&train_set.features).unwrap();
        let cfg = TrainConfig { epochs: 5, shuffle_seed: seed, ..Default::default() };
        let t = train_encoded(&hvs, &train_set.labels, 10, &cfg).unwrap();
        monotone += usize::from(t.history.windows(2).all(|w| w[1] >= w[0]));
        curves.push(t.history);
    }
    assert!(monotone >= 4, "{curves:?}");
}

#[test]
fn mnist_sixteen_bit_classes_keep_accuracy() {
    let Some(dir) = mnist_dir() else { return };
    let s = mnist_splits(&dir, false).unwrap();
    let enc = Encoder::with_preprocess(784, 2048, 1, Preprocess::default());
    let model: HdcModel = train(&enc, &s.train, &TrainConfig::default()).unwrap().model;
    let hvs = enc.encode_batch(&s.test.features).unwrap();
    let float = accuracy_of(&plain_predictions(&model, &hvs).unwrap(), &s.test.labels);
    let q16 = accuracy_of(&plain_predictions(&quantize_model(&model, 16).unwrap(), &hvs).unwrap(), &s.test.labels);
    assert!((float - q16).abs() <= 0.003, "float {float}, 16-bit {q16}");
}
