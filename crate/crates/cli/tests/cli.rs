use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Ten class prototypes with pixel noise, written as IDX files.
fn write_dataset(dir: &Path, train: usize, test: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let protos: Vec<Vec<u8>> = (0..10)
        .map(|c| (0..784).map(|p| if (p / 28 + c * 3) % 10 < 3 || p % (c + 7) == 0 { 220 } else { 0 }).collect())
        .collect();
    for (prefix, n) in [("train", train), ("t10k", test)] {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for x in [0x803u32, n as u32, 28, 28] {
            images.extend(x.to_be_bytes());
        }
        for x in [0x801u32, n as u32] {
            labels.extend(x.to_be_bytes());
        }
        for _ in 0..n {
            let c = rng.gen_range(0..10);
            labels.push(c as u8);
            images.extend(protos[c].iter().map(|&v| v.saturating_add(rng.gen_range(0..30)).saturating_sub(15)));
        }
        std::fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), images).unwrap();
        std::fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), labels).unwrap();
    }
}

struct Env {
    _tmp: tempfile::TempDir,
    config: std::path::PathBuf,
    out: std::path::PathBuf,
}

fn setup() -> Env {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    write_dataset(&data, 300, 40);
    let out = tmp.path().join("out");
    let config = tmp.path().join("config.json");
    let json = serde_json::json!({
        "schema_version": 1,
        "seed": 5,
        "data_dir": data,
        "out_dir": out,
        "architecture": "784-40-20-10",
        "limits": { "hw_images": 4 },
        "train": { "epochs": 3 },
        "finetune": { "samples": 20, "iterations": 2 },
        "trace_limit": 3
    });
    std::fs::write(&config, serde_json::to_vec_pretty(&json).unwrap()).unwrap();
    Env { _tmp: tmp, config, out }
}

fn yoso(env: &Env, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_yoso"))
        .arg("--config")
        .arg(&env.config)
        .args(args)
        .output()
        .unwrap()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn pipeline_stages_and_compare() {
    let env = setup();
    let o = yoso(&env, &["run", "--backend", "hw"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("placement missing"), "{err}");

    for stage in ["train-ann", "convert", "finetune", "encode", "map"] {
        ok(yoso(&env, &[stage]));
    }
    for b in ["ref-cont", "ref-disc", "hw"] {
        ok(yoso(&env, &["run", "--backend", b]));
    }
    // The default discrete reference runs the float network.
    let o = yoso(&env, &["compare"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("--quantize"));
    ok(yoso(&env, &["run", "--backend", "ref-disc", "--quantize"]));
    ok(yoso(&env, &["compare"]));
    ok(yoso(&env, &["report"]));

    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(env.out.join("report.json")).unwrap()).unwrap();
    for k in ["ann", "snn_continuous", "snn_discrete", "snn_hardware"] {
        let v = report["headline"][k].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{k} = {v}");
    }
    assert!(report["traffic"].is_object());

    // Re-running a stage with the same inputs reproduces it byte for byte.
    let before = std::fs::read(env.out.join("placement.yoso")).unwrap();
    let summary = std::fs::read(env.out.join("runs/hw/outputs.csv")).unwrap();
    ok(yoso(&env, &["map"]));
    ok(yoso(&env, &["run", "--backend", "hw"]));
    assert_eq!(std::fs::read(env.out.join("placement.yoso")).unwrap(), before);
    assert_eq!(std::fs::read(env.out.join("runs/hw/outputs.csv")).unwrap(), summary);
}

#[test]
fn compare_reports_mismatch() {
    let env = setup();
    for stage in ["train-ann", "convert", "map"] {
        ok(yoso(&env, &[stage]));
    }
    ok(yoso(&env, &["run", "--backend", "hw"]));
    ok(yoso(&env, &["run", "--backend", "ref-disc", "--quantize"]));
    ok(yoso(&env, &["compare", "--quantize"]));
    let path = env.out.join("runs/ref-disc/outputs.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[1].split(',').map(String::from).collect();
    let last = fields.len() - 1;
    fields[last] = "12345".into();
    lines[1] = fields.join(",");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = yoso(&env, &["compare", "--quantize"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn config_errors_are_reported() {
    let env = setup();
    let o = Command::new(env!("CARGO_BIN_EXE_yoso")).args(["show-config"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
    let shown = ok(yoso(&env, &["show-config", "--seed", "11"]));
    assert!(shown.contains("\"seed\": 11"), "{shown}");
    let o = yoso(&env, &["convert"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("train-ann"));
}
