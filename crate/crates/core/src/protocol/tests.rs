use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::ckks::{ciphertext_size, keygen, Evaluator, GaloisKeys, SecretKey};
use crate::hdc::{dot, norm, Encoder, HdcModel, ModelFile, Preprocess, StoredModel};

fn random_model(l: usize, d: usize, seed: u64) -> HdcModel {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let m = HdcModel {
        classes: (0..l).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
        normalized: false,
        label_names: None,
    };
    m.normalize().unwrap()
}

fn model_file(l: usize, d: usize) -> ModelFile {
    ModelFile { input_dim: 16, seed: 3, preprocess: Preprocess::default(), model: StoredModel::Float(random_model(l, d, 1)) }
}

struct Fixture {
    server: ServerModel,
    sk: SecretKey,
    gks: GaloisKeys,
}

fn fixture(log2n: u32, l: usize, d: usize) -> Fixture {
    let params = CkksParams::standard(log2n).unwrap();
    let server = ServerModel::new(&model_file(l, d), &params).unwrap();
    let (sk, gks) = keygen(server.params(), &mut ChaCha20Rng::seed_from_u64(11)).unwrap();
    Fixture { server, sk, gks }
}

fn plain_dots(f: &Fixture, h: &[f64]) -> Vec<f64> {
    match &model_file(f.server.num_classes(), h.len()).model {
        StoredModel::Float(m) => m.classes.iter().map(|c| dot(c, h)).collect(),
        _ => unreachable!(),
    }
}

#[test]
fn chunk_counts() {
    let p12 = CkksParams::standard(12).unwrap();
    let p13 = CkksParams::standard(13).unwrap();
    assert_eq!(Layout::new(2048, &p12).chunks, 1);
    assert_eq!(Layout::new(8192, &p12).chunks, 4);
    assert_eq!(Layout::new(4096, &p12).chunks, 2);
    assert_eq!(Layout::new(4096, &p13).chunks, 1);
    let l = Layout::new(3000, &p12);
    assert_eq!((l.chunks, l.chunk_len), (2, 2048));
    let l = Layout::new(600, &p12);
    assert_eq!((l.chunks, l.chunk_len), (1, 1024));
}

#[test]
fn packing_replicates_and_unpacks() {
    let p = CkksParams::standard(12).unwrap();
    let v: Vec<f64> = (0..600).map(|i| i as f64).collect();
    let l = Layout::new(600, &p);
    let packed = l.pack_all(&v);
    assert_eq!(packed[0][1024 + 5], 5.0);
    assert_eq!(packed[0][700], 0.0);
    assert_eq!(l.unpack(&packed), v);
    let w: Vec<f64> = (0..5000).map(|i| i as f64).collect();
    let l = Layout::new(5000, &p);
    let packed = l.pack_all(&w);
    assert_eq!(packed.len(), 3);
    assert_eq!(packed[2][5000 - 4096 - 1], 4999.0);
    assert_eq!(packed[2][1000], 0.0);
    assert_eq!(l.unpack(&packed), w);
}

#[test]
fn query_chunks_decrypt_to_hypervector() {
    let params = CkksParams::standard(12).unwrap();
    let (sk, _) = keygen(&params, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
    let enc = Encoder::new(20, 5000, 4);
    let x: Vec<f32> = (0..20).map(|i| (i % 7) as f32 / 7.0).collect();
    let h = enc.encode(&x).unwrap();
    let q = client_prepare_query(&x, &enc, &params, &sk, &mut ChaCha20Rng::seed_from_u64(2)).unwrap();
    assert_eq!(q.chunks.len(), 3);
    assert!(q.chunks.iter().all(|c| c.is_seed_compressed()));
    let dec: Vec<Vec<f64>> = q.chunks.iter().map(|c| sk.decrypt_values(c).unwrap()).collect();
    let back = Layout::new(5000, &params).unpack(&dec);
    for (a, b) in back.iter().zip(&h) {
        assert!((a - b).abs() < 1e-5);
    }
}

#[test]
fn scores_match_plain_dot_products() {
    for d in [512, 4096] {
        let f = fixture(12, 3, d);
        let ev = Evaluator::new(f.server.params());
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..3 {
            let h: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let q = encrypt_hypervector(&h, f.server.params(), &f.sk, &mut rng).unwrap();
            let s = server_similarity(&q, &f.server, &f.gks, &ev).unwrap();
            let (_, got) = client_finalize(&s, &f.sk).unwrap();
            let want = plain_dots(&f, &h);
            let scale = norm(&h);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-3 * scale, "D={d}: {g} vs {w}");
            }
        }
    }
}

#[test]
fn self_query_wins_and_zero_query_scores_zero() {
    let f = fixture(12, 4, 1024);
    let ev = Evaluator::new(f.server.params());
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let classes = match model_file(4, 1024).model {
        StoredModel::Float(m) => m.classes,
        _ => unreachable!(),
    };
    let q = encrypt_hypervector(&classes[2], f.server.params(), &f.sk, &mut rng).unwrap();
    let (label, scores) = client_finalize(&server_similarity(&q, &f.server, &f.gks, &ev).unwrap(), &f.sk).unwrap();
    assert_eq!(label, 2);
    assert!((scores[2] - 1.0).abs() < 1e-3);
    let q = encrypt_hypervector(&[0.0; 1024], f.server.params(), &f.sk, &mut rng).unwrap();
    let (_, scores) = client_finalize(&server_similarity(&q, &f.server, &f.gks, &ev).unwrap(), &f.sk).unwrap();
    assert!(scores.iter().all(|s| s.abs() < 1e-3));
}

#[test]
fn depth_and_op_counts() {
    let f = fixture(12, 3, 4096);
    let ev = Evaluator::new(f.server.params());
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let h: Vec<f64> = (0..4096).map(|_| rng.random_range(-1.0..1.0)).collect();
    let q = encrypt_hypervector(&h, f.server.params(), &f.sk, &mut rng).unwrap();
    let s = server_similarity(&q, &f.server, &f.gks, &ev).unwrap();
    let c = ev.counts();
    assert_eq!(c.mul_plain, 3 * 2);
    assert_eq!(c.add, 3 * (1 + 11));
    assert_eq!(c.rotate, 3 * 11);
    assert_eq!(c.rescale, 0);
    assert!(s.scores.iter().all(|ct| ct.mul_depth() == 1));
}

#[test]
fn frames_roundtrip() {
    let f = fixture(12, 2, 8192);
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let h: Vec<f64> = (0..8192).map(|_| rng.random_range(-1.0..1.0)).collect();
    let q = encrypt_hypervector(&h, f.server.params(), &f.sk, &mut rng).unwrap();
    assert_eq!(q.chunks.len(), 4);
    let frame = q.to_frame(f.server.params());
    let mut buf = Vec::new();
    write_frame(&mut buf, &frame).unwrap();
    let back = read_frame(&mut buf.as_slice()).unwrap().unwrap();
    assert_eq!(back, frame);
    assert_eq!(QueryMessage::from_payload(&back.payload, f.server.params()).unwrap(), q);
    // 4 chunks, seed-compressed, one 54-bit ciphertext prime at N = 2^12
    let ct = ciphertext_size(f.server.params(), 0, true);
    assert_eq!(ct, 14 + 4096 * 8 + 32);
    assert_eq!(frame.wire_len(), 5 + 4 + 4 * (4 + ct));

    let ev = Evaluator::new(f.server.params());
    let s = server_similarity(&q, &f.server, &f.gks, &ev).unwrap();
    let sf = s.to_frame(f.server.params());
    assert_eq!(ScoreMessage::from_payload(&sf.payload, f.server.params()).unwrap().scores.len(), 2);
    assert!(QueryMessage::from_payload(&frame.payload[..100], f.server.params()).is_err());
    assert!(read_frame(&mut &buf[..3]).unwrap().is_none());
}

fn session(f: &Fixture) -> ClientSession {
    ClientSession::new(f.server.manifest(), f.sk.clone(), f.gks.clone()).unwrap()
}

#[test]
fn loopback_session_answers_each_query() {
    let f = fixture(12, 3, 1024);
    let sess = session(&f);
    let enc = sess.encoder().clone();
    let server = Arc::new(ServerModel::new(&model_file(3, 1024), &CkksParams::standard(12).unwrap()).unwrap());
    let (stream, handle) = spawn_loopback(server).unwrap();
    let mut client = Client::connect(stream, sess, 1).unwrap();
    for seed in 0..2u64 {
        let x: Vec<f32> = (0..16).map(|i| ((i as u64 * 7 + seed) % 5) as f32).collect();
        let (label, scores) = client.classify(&x).unwrap();
        let plain = plain_dots(&f, &enc.encode(&x).unwrap());
        assert_eq!(label, crate::hdc::argmax(&plain).unwrap());
        assert_eq!(scores.len(), 3);
    }
    drop(client);
    handle.join().unwrap().unwrap();
}

#[test]
fn query_before_setup_gets_error_frame() {
    let f = fixture(12, 2, 512);
    let server = Arc::new(ServerModel::new(&model_file(2, 512), &CkksParams::standard(12).unwrap()).unwrap());
    let (mut stream, handle) = spawn_loopback(server).unwrap();
    let q = encrypt_hypervector(&[0.5; 512], f.server.params(), &f.sk, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
    write_frame(&mut stream, &q.to_frame(f.server.params())).unwrap();
    let reply = read_frame(&mut stream).unwrap().unwrap();
    assert_eq!(reply.kind, FrameType::Error);
    assert_eq!(reply.parse_error().0, ErrorCode::NoSession);
    drop(stream);
    assert!(handle.join().unwrap().is_err());
}

#[test]
fn wrong_parameters_are_rejected() {
    let f = fixture(12, 2, 512);
    let server = Arc::new(ServerModel::new(&model_file(2, 512), &CkksParams::standard(13).unwrap()).unwrap());
    // client keys on N = 2^12 talking to an N = 2^13 server
    let (stream, handle) = spawn_loopback(server).unwrap();
    let mut client = Client::connect(stream, session(&f), 1).unwrap();
    let err = client.classify(&[1.0; 16]).unwrap_err();
    assert!(matches!(err, ProtocolError::Remote { code: ErrorCode::ParamsMismatch, .. }), "{err}");
    drop(client);
    assert!(handle.join().unwrap().is_err());
    // keys that do not match the manifest never leave the client
    let p13 = CkksParams::standard(13).unwrap();
    let m13 = ServerModel::new(&model_file(2, 512), &p13).unwrap();
    assert!(matches!(
        ClientSession::new(m13.manifest(), f.sk.clone(), f.gks.clone()),
        Err(ProtocolError::Rejected { code: ErrorCode::ParamsMismatch, .. })
    ));
}

#[test]
fn manifest_roundtrip_and_encoder_check() {
    let f = fixture(12, 2, 512);
    let m = f.server.manifest().clone();
    assert_eq!(Manifest::from_json(&m.to_json()).unwrap(), m);
    assert!(m.encoder().is_ok());
    let tampered = Manifest { encoder_seed: 4, ..m };
    assert!(matches!(tampered.encoder(), Err(ProtocolError::Rejected { code: ErrorCode::EncoderMismatch, .. })));
}

#[test]
fn class_scale_policy() {
    // float model at N = 2^11: the whole class precision budget is used up by the query
    let p11 = CkksParams::standard(11).unwrap();
    let m = random_model(10, 2048, 2).classes;
    let (q, c) = class_scale_for(&p11, &Layout::new(2048, &p11), &m, 20).unwrap();
    assert_eq!((q, c), (20, 0));
    let p13 = CkksParams::standard(13).unwrap();
    let (q, c) = class_scale_for(&p13, &Layout::new(2048, &p13), &m, 30).unwrap();
    assert_eq!(q, 30);
    assert!(c >= 20, "class scale {c}");
    // 16-bit integers need most of the capacity
    let ints: Vec<Vec<f64>> = m.iter().map(|c| c.iter().map(|x| (x * 32767.0 / 0.1).round().clamp(-32767.0, 32767.0)).collect()).collect();
    let (q, c) = class_scale_for(&p13, &Layout::new(2048, &p13), &ints, 30).unwrap();
    assert_eq!(q, 30);
    assert!(c <= 5);
}

#[test]
fn finalize_edge_cases() {
    let f = fixture(12, 1, 256);
    let ev = Evaluator::new(f.server.params());
    let q = encrypt_hypervector(&[0.1; 256], f.server.params(), &f.sk, &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
    let s = server_similarity(&q, &f.server, &f.gks, &ev).unwrap();
    assert_eq!(client_finalize(&s, &f.sk).unwrap().0, 0);
    assert!(client_finalize(&ScoreMessage { scores: vec![] }, &f.sk).is_err());
}
