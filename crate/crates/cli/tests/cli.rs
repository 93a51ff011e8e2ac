use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

const BIN: &str = env!("CARGO_BIN_EXE_leapfactual");

/// A toy run small enough for a few seconds of training.
const SMALL: &str = r#"
seed = 7

[toy]
n_per_class = 1000

[toy.flow]
sigma = 0.0
epochs = 25
batch_size = 256
lr = 0.003
latent_dim = 2
n_classes = 4
hidden = [64, 64]
schedule = "cosine"

[toy.classifier]
hidden = [16, 16]
epochs = 5
batch_size = 128
lr = 0.01

[leapfactual]
euler_steps = 40

[eval]
seeds = [1, 2]
toy_queries = 20
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().expect("exited normally")
}

fn small_workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    dir
}

fn trained_toy() -> tempfile::TempDir {
    let dir = small_workspace();
    for cmd in [&["gen-data", "--toy"][..], &["train-classifier"], &["train-flow"]] {
        let mut args = vec!["--config", "run.toml"];
        args.extend_from_slice(cmd);
        ok(dir.path(), &args);
    }
    dir
}

#[test]
fn toy_data_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-data", "--toy", "--n", "4000", "--seed", "7"]);
    let path = dir.path().join("data/toy.csv");
    let first = std::fs::read(&path).unwrap();
    let rows = csv::Reader::from_reader(&first[..]).records().count();
    assert_eq!(rows, 16000);

    ok(dir.path(), &["gen-data", "--toy", "--n", "4000", "--seed", "7"]);
    assert_eq!(std::fs::read(&path).unwrap(), first);
    ok(dir.path(), &["gen-data", "--toy", "--n", "4000", "--seed", "8"]);
    assert_ne!(std::fs::read(&path).unwrap(), first);
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(dir.path(), &["gen-data", "--toy", "--n", "0"]), 2);
    assert_eq!(code(dir.path(), &["explain", "--input", "0.1,0.1"]), 2);

    std::fs::write(dir.path().join("bad.toml"), "seed = 1\nspeed = 3\n").unwrap();
    assert_eq!(code(dir.path(), &["--config", "bad.toml", "print-config"]), 2);
    std::fs::write(dir.path().join("bad.toml"), "[data]\ntrain_fraction = 1.5\n").unwrap();
    assert_eq!(code(dir.path(), &["--config", "bad.toml", "print-config"]), 2);

    assert_eq!(code(dir.path(), &["train-classifier"]), 3);
    assert_eq!(code(dir.path(), &["explain", "--input", "0.1,0.1", "--target", "3"]), 3);
    assert_eq!(code(dir.path(), &["--dataset", "idx", "train-vae"]), 3);
}

#[test]
fn printed_config_reloads_to_the_same_config() {
    let dir = small_workspace();
    let printed = ok(dir.path(), &["--config", "run.toml", "--seed", "11", "print-config"]);
    assert!(printed.contains("seed = 11"));
    std::fs::write(dir.path().join("again.toml"), &printed).unwrap();
    assert_eq!(ok(dir.path(), &["--config", "again.toml", "print-config"]), printed);
}

#[test]
fn toy_pipeline_explains_renders_and_evaluates() {
    let dir = trained_toy();
    let d = dir.path();

    let explain = |out: &str| {
        ok(d, &["--config", "run.toml", "explain", "--input", "-0.3,-0.2", "--target", "3", "--mode", "ce", "--out", out]);
        let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join(out).join("counterfactual.json")).unwrap()).unwrap();
        (summary, std::fs::read(d.join(out).join("trajectory.jsonl")).unwrap())
    };
    let (summary, trajectory) = explain("a");
    assert_eq!(summary["final_label"], 3);
    assert_eq!(summary["target"], 3);
    assert_eq!(explain("b").1, trajectory);
    for line in String::from_utf8(trajectory).unwrap().lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(record["z"].as_array().is_some_and(|z| z.len() == 2));
    }

    // Index into the held-out split works too.
    ok(d, &["--config", "run.toml", "explain", "--input", "0", "--target", "1", "--out", "c"]);

    ok(d, &["--config", "run.toml", "demo-toy", "--out", "demo"]);
    let mut svgs = 0;
    for entry in std::fs::read_dir(d.join("demo")).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        match path.extension().and_then(|e| e.to_str()) {
            Some("svg") => {
                let doc = roxmltree::Document::parse(&text).unwrap();
                assert_eq!(doc.root_element().tag_name().name(), "svg");
                svgs += 1;
            }
            Some("jsonl") => {
                for line in text.lines() {
                    serde_json::from_str::<serde_json::Value>(line).unwrap();
                }
            }
            _ => {}
        }
    }
    assert_eq!(svgs, 5);

    let report = d.join("outputs/eval_toy.csv");
    ok(d, &["--config", "run.toml", "eval", "--suite", "toy"]);
    let first = std::fs::read(&report).unwrap();
    let mut reader = csv::Reader::from_reader(&first[..]);
    assert_eq!(reader.headers().unwrap(), vec!["metric", "mean", "stderr", "n_runs"]);
    let metrics: Vec<String> = reader.records().map(|r| r.unwrap()[0].to_string()).collect();
    for prefix in ["ACC", "AUC", "PSNR", "SSIM"] {
        assert!(metrics.iter().any(|m| m.starts_with(prefix)), "{prefix} missing from {metrics:?}");
    }
    ok(d, &["--config", "run.toml", "eval", "--suite", "toy"]);
    assert_eq!(std::fs::read(&report).unwrap(), first);
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn get(addr: SocketAddr, path: &str) -> Option<String> {
    let mut stream = TcpStream::connect_timeout(&addr, Duration::from_millis(200)).ok()?;
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    write!(stream, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut response = String::new();
    stream.read_to_string(&mut response).ok()?;
    Some(response)
}

struct Server(std::process::Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn serve_answers_health_checks() {
    let dir = trained_toy();
    let port = free_port();
    let sessions: PathBuf = dir.path().join("sessions");
    let _server = Server(
        Command::new(BIN)
            .current_dir(dir.path())
            .args(["--config", "run.toml", "serve", "--port", &port.to_string()])
            .env("RUST_LOG", "warn")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let addr: SocketAddr = format!("127.0.0.1:{port}").parse().unwrap();
    let deadline = Instant::now() + Duration::from_secs(30);
    let health = loop {
        if let Some(r) = get(addr, "/api/v1/healthz") {
            break r;
        }
        assert!(Instant::now() < deadline, "server did not come up");
        std::thread::sleep(Duration::from_millis(100));
    };
    assert!(health.starts_with("HTTP/1.1 200"), "{health}");
    let index = get(addr, "/").unwrap();
    assert!(index.starts_with("HTTP/1.1 200"), "{index}");
    assert!(sessions.is_dir());
}
