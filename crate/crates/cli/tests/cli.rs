use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"{
    "task": {"kind": "copy", "n": 5},
    "cell": "lstm",
    "gate": {"variant": "UR"},
    "hidden": 8,
    "train": {"steps": 6, "batch_size": 4, "eval_batch": 8, "eval_interval": 2, "shards": 2},
    "seeds": {"init": 1, "data": 2}
}"#;

const NAMES: [&str; 9] = ["--", "C-", "O-", "U-", "-R", "OM", "UM", "OR", "UR"];

fn urgate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_urgate")).args(args).output().expect("spawn urgate")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn train_succeeds_and_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", CONFIG);
    let out = dir.path().join("run");
    let o = urgate(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    let steps: Vec<u64> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["step"].as_u64().unwrap())
        .collect();
    assert_eq!(steps, [0, 2, 4, 6]);
}

#[test]
fn unknown_variant_exits_one_and_lists_all_names() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &CONFIG.replace("\"UR\"", "\"XX\""));
    let o = urgate(&["train", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("gate"), "{err}");
    for n in NAMES {
        assert!(err.contains(n), "{n} missing: {err}");
    }
}

#[test]
fn misspelled_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &CONFIG.replace("\"hidden\"", "\"hiden\""));
    let o = urgate(&["train", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("hiden"), "{}", stderr(&o));
}

#[test]
fn divergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = CONFIG
        .replace("\"copy\", \"n\": 5", "\"adding\", \"n\": 6")
        .replace("\"steps\": 6", "\"steps\": 50, \"learning_rate\": 1e300, \"clip_norm\": 1e300");
    let cfg = write_config(dir.path(), "c.json", &text);
    let o = urgate(&["train", "--config", &cfg, "--out", dir.path().join("d").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"));
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", CONFIG);
    let mut outputs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "3")] {
        let out = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_urgate"))
            .args(["train", "--deterministic", "--config", &cfg, "--out", out.to_str().unwrap()])
            .env("URGATE_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outputs.push(std::fs::read(out.join("metrics.jsonl")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn seed_flag_overrides_init_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", CONFIG);
    let out = dir.path().join("s");
    let o = urgate(&["train", "--config", &cfg, "--seed", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    assert!(text.lines().all(|l| l.ends_with("\"seed\":7}")), "{text}");
}

#[test]
fn gradcheck_passes_and_fault_exits_three() {
    let o = urgate(&["gradcheck", "--cell", "janet", "--variant", "UR", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = urgate(&["gradcheck", "--cell", "lstm", "--variant", "OR", "--inject-fault", "b.forget:1.01"]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("b.forget"), "{err}");
    assert!(!err.contains("w.forget"), "{err}");
}

#[test]
fn missing_checkpoint_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", CONFIG);
    let ck = dir.path().join("absent.ckpt");
    let o = urgate(&[
        "analyze",
        "histogram",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("absent.ckpt"), "{}", stderr(&o));
}

#[test]
fn analyze_bounds_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = urgate(&["analyze", "bounds", "--points", "9", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    assert_eq!(text.lines().count(), 10);
}

#[test]
fn sweep_runs_every_pair() {
    let dir = tempfile::tempdir().unwrap();
    let text = CONFIG.replace(
        "\"seeds\"",
        "\"sweep\": {\"variants\": [\"UR\", \"--\"], \"init_seeds\": [0, 1]}, \"seeds\"",
    );
    let cfg = write_config(dir.path(), "c.json", &text);
    let out = dir.path().join("sw");
    let o = urgate(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for d in ["UR_s0", "UR_s1", "std_s0", "std_s1"] {
        assert!(out.join(d).join("metrics.jsonl").exists(), "{d}");
    }
    assert!(out.join("aggregate.csv").exists());
}

#[test]
fn gen_data_round_trips_through_training() {
    let dir = tempfile::tempdir().unwrap();
    let o = urgate(&["gen-data", "pixel", "--count", "12", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = urgate(&["gen-data", "copy", "--n", "5", "--count", "3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("copy.bin").exists());
    let images = dir.path().join("images.idx");
    let labels = dir.path().join("labels.idx");
    let text = CONFIG.replace(
        "{\"kind\": \"copy\", \"n\": 5}",
        &format!("{{\"kind\": \"pixel\", \"images\": {:?}, \"labels\": {:?}}}", images, labels),
    );
    let cfg = write_config(dir.path(), "p.json", &text.replace("\"steps\": 6", "\"steps\": 2"));
    let o = urgate(&["train", "--config", &cfg, "--out", dir.path().join("p").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(urgate(&["nonsense"]).status.code(), Some(1));
    assert_eq!(urgate(&["--help"]).status.code(), Some(0));
}
