use std::path::Path;
use std::process::{Command, Output};

fn geoneg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoneg")).args(args).env_remove("GEONEG_SEED").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = geoneg(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

fn gen(dir: &Path, n: &str) {
    ok(&["gen", "-n", n, "--seed", "7", "--out", dir.to_str().unwrap()]);
}

#[test]
fn gen_is_deterministic_and_counts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    gen(a.path(), "10");
    gen(b.path(), "10");
    assert_eq!(lines(&a.path().join("scenes.jsonl")), 10);
    for f in ["scenes.jsonl", "captions.jsonl", "svg/geo_3.svg", "svg/nomarks/geo_3.svg"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn zero_scenes_is_usage_error() {
    assert_eq!(geoneg(&["gen", "-n", "0", "--out", "unused"]).status.code(), Some(2));
    assert_eq!(geoneg(&["bogus"]).status.code(), Some(2));
}

#[test]
fn seed_env_and_config_fallbacks() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let by_flag = d.join("flag");
    ok(&["gen", "-n", "3", "--seed", "41", "--out", by_flag.to_str().unwrap()]);
    let by_env = d.join("env");
    let out = Command::new(env!("CARGO_BIN_EXE_geoneg"))
        .args(["gen", "-n", "3", "--out", by_env.to_str().unwrap()])
        .env("GEONEG_SEED", "41")
        .output()
        .unwrap();
    assert!(out.status.success());
    let cfg = d.join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 41, "n": 3}"#).unwrap();
    let by_cfg = d.join("cfg");
    ok(&["gen", "--config", cfg.to_str().unwrap(), "--out", by_cfg.to_str().unwrap()]);
    let read = |p: &Path| std::fs::read(p.join("scenes.jsonl")).unwrap();
    assert_eq!(read(&by_flag), read(&by_env));
    assert_eq!(read(&by_flag), read(&by_cfg));
}

#[test]
fn negatives_contracts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    gen(dir.path(), "10");
    ok(&["negatives", "--corpus", d, "--family", "rule", "--count", "10"]);
    let text = std::fs::read_to_string(dir.path().join("negatives_rule.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 10);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["negatives"].as_array().unwrap().len(), 10);
    }
    ok(&["negatives", "--corpus", d, "--family", "scene", "--count", "3"]);
    let svgs = std::fs::read_dir(dir.path().join("svg/negatives")).unwrap().count();
    assert_eq!(svgs, lines(&dir.path().join("neg_scenes.jsonl")));
    assert!(svgs > 0);
    let out = geoneg(&["negatives", "--corpus", d, "--family", "retrieval", "--count", "10"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_without_run_names_weight_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    gen(dir.path(), "4");
    let missing = dir.path().join("no-run");
    let out = geoneg(&["eval", "--corpus", d, "--run", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("weights.bin"));
}

#[test]
fn full_pipeline_and_audit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    gen(dir.path(), "24");
    for family in ["rule", "scene", "retrieval"] {
        ok(&["negatives", "--corpus", d, "--family", family, "--count", "5"]);
    }
    let run = dir.path().join("run");
    let r = run.to_str().unwrap();
    ok(&["train", "--corpus", d, "--out", r, "--steps", "50", "--negative-ratio", "5", "--families", "rule,scene"]);
    for f in ["run.json", "weights.bin", "loss.csv"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    assert_eq!(lines(&run.join("loss.csv")), 51);
    let out = ok(&["eval", "--corpus", d, "--run", r]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    for set in ["rule-neg", "image-neg", "retrieval-neg"] {
        assert!(stdout.contains(&format!("{set} Hit@1")), "{stdout}");
    }
    let out = ok(&["audit", "--corpus", d, "--cutoff", "0.995"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l == "<0.995 100%"), "{stdout}");
    assert!(stdout.contains("separation"));
    let out = ok(&["sweep", "--corpus", d, "--families", "retrieval", "--ratios", "2,5", "--steps", "20"]);
    let csv = String::from_utf8_lossy(&out.stdout);
    assert!(csv.starts_with("ratio,final_loss,hit_at_1\n2,"), "{csv}");
    assert_eq!(geoneg(&["sweep", "--corpus", d, "--families", "retrieval", "--ratios", "5,5"]).status.code(), Some(2));
}
