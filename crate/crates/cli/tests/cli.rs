use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_hehdc");

fn hehdc(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("HEHDC_DATA_DIR").output().expect("run hehdc")
}

fn ok(args: &[&str]) -> String {
    let out = hehdc(args);
    assert!(
        out.status.success(),
        "hehdc {args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Synthetic data and a 16-bit model in `dir`.
fn prepare(dir: &Path) {
    let data = dir.join("data");
    ok(&["ingest", "--source", "synthetic", "--classes", "3", "--features", "8", "--per-class", "40", "--out", p(&data)]);
    ok(&["train", "--data", p(&data), "--dim", "512", "--epochs", "3", "--out", p(&dir.join("float.hdcm"))]);
    ok(&[
        "quantize",
        "--model",
        p(&dir.join("float.hdcm")),
        "--data",
        p(&data),
        "--params",
        "12",
        "--grid",
        "20,24,28",
        "--out",
        p(&dir.join("q16.hdcm")),
    ]);
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn start_server(dir: &Path, params: &str, endpoint: &str, connections: &str) -> Server {
    let mut child = Command::new(BIN)
        .args([
            "serve",
            "--model",
            p(&dir.join("q16.hdcm")),
            "--params",
            params,
            "--endpoint",
            endpoint,
            "--manifest-out",
            p(&dir.join("manifest.json")),
            "--max-connections",
            connections,
        ])
        .stdout(Stdio::piped())
        .spawn()
        .expect("spawn server");
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    assert!(line.starts_with("listening on"), "{line}");
    Server(child)
}

#[test]
fn synthetic_round_trip_over_a_socket() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    let sock = format!("unix:{}", dir.join("s.sock").display());
    let _server = start_server(dir, "12", &sock, "1");
    ok(&["keygen", "--manifest", p(&dir.join("manifest.json")), "--out", p(&dir.join("keys"))]);
    let report = dir.join("classify.json");
    let out = ok(&[
        "classify",
        "--manifest",
        p(&dir.join("manifest.json")),
        "--keys",
        p(&dir.join("keys")),
        "--endpoint",
        &sock,
        "--data",
        p(&dir.join("data")),
        "--count",
        "6",
        "--model",
        p(&dir.join("q16.hdcm")),
        "--report",
        p(&report),
    ]);
    assert!(out.contains("agreement with plaintext: 100.00%"), "{out}");
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    let results = r["results"].as_array().unwrap();
    assert_eq!(results.len(), 6);
    for x in results {
        assert!(x["label"].as_u64().unwrap() < 3);
        assert_eq!(x["label"], x["plain_label"]);
    }
}

#[test]
fn keys_for_other_parameters_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    let sock = format!("unix:{}", dir.join("s.sock").display());
    let _server = start_server(dir, "12", &sock, "1");
    ok(&["keygen", "--params", "13", "--out", p(&dir.join("keys"))]);
    let out = hehdc(&[
        "classify",
        "--manifest",
        p(&dir.join("manifest.json")),
        "--keys",
        p(&dir.join("keys")),
        "--endpoint",
        &sock,
        "--data",
        p(&dir.join("data")),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // usage
    assert_eq!(hehdc(&["frobnicate"]).status.code(), Some(2));
    let bits1 = hehdc(&["quantize", "--model", "m", "--data", "d", "--out", "o", "--bits", "1"]);
    assert_eq!(bits1.status.code(), Some(2));
    // crypto parameters over the security budget
    let out = hehdc(&["keygen", "--params", "11:54,54:30", "--out", p(&dir.join("k"))]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
    // nobody listening
    prepare(dir);
    let _s = start_server(dir, "12", &format!("unix:{}", dir.join("a.sock").display()), "1");
    ok(&["keygen", "--manifest", p(&dir.join("manifest.json")), "--out", p(&dir.join("keys"))]);
    let out = hehdc(&[
        "classify",
        "--manifest",
        p(&dir.join("manifest.json")),
        "--keys",
        p(&dir.join("keys")),
        "--endpoint",
        &format!("unix:{}", dir.join("nobody.sock").display()),
        "--data",
        p(&dir.join("data")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn training_is_deterministic_and_warns_off_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = dir.join("data");
    ok(&["ingest", "--source", "synthetic", "--classes", "2", "--out", p(&data)]);
    let mut bytes = Vec::new();
    for name in ["a.hdcm", "b.hdcm"] {
        let out = hehdc(&["train", "--data", p(&data), "--dim", "300", "--epochs", "2", "--out", p(&dir.join(name))]);
        assert!(out.status.success());
        assert!(String::from_utf8_lossy(&out.stderr).contains("outside the usual grid"));
        bytes.push(std::fs::read(dir.join(name)).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    let on_grid = hehdc(&["train", "--data", p(&data), "--dim", "2048", "--epochs", "1", "--out", p(&dir.join("c.hdcm"))]);
    assert!(!String::from_utf8_lossy(&on_grid.stderr).contains("outside the usual grid"));
}

#[test]
fn eval_grid_and_bench_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    let report = dir.join("eval.json");
    ok(&[
        "eval",
        "--model",
        p(&dir.join("float.hdcm")),
        "--data",
        p(&dir.join("data")),
        "--mode",
        "plain",
        "--bits-grid",
        "0,16",
        "--report",
        p(&report),
    ]);
    let rows: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let accs: Vec<f64> = rows.as_array().unwrap().iter().map(|r| r["accuracy"].as_f64().unwrap()).collect();
    assert_eq!(accs.len(), 2);
    assert!(accs.iter().all(|&a| a > 0.9), "{accs:?}");
    let enc = dir.join("enc.json");
    ok(&[
        "eval",
        "--model",
        p(&dir.join("q16.hdcm")),
        "--data",
        p(&dir.join("data")),
        "--mode",
        "encrypted",
        "--params-grid",
        "12",
        "--count",
        "10",
        "--report",
        p(&enc),
    ]);
    let rows: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&enc).unwrap()).unwrap();
    assert_eq!(rows[0]["log2n"], 12);
    assert!(rows[0]["accuracy"].as_f64().unwrap() > 0.8);
    assert!(dir.join("enc.csv").is_file());

    let bench = dir.join("bench.json");
    let out = ok(&[
        "bench",
        "--suite",
        "ops",
        "--params-grid",
        "11",
        "--reps",
        "1",
        "--warmup",
        "0",
        "--report",
        p(&bench),
    ]);
    assert!(out.contains("rotate"));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&bench).unwrap()).unwrap();
    assert_eq!(r["ops"].as_array().unwrap().len(), 6);
    assert_eq!(r["config"]["reps"], 1);
    assert!(std::fs::read_to_string(dir.join("bench.csv")).unwrap().starts_with("suite,"));
}
