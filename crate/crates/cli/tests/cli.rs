use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bottleneck"))
}

#[test]
fn invalid_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "env.family = multiroom\nenv.n = 2\nenv.s = 4\ntrain.gamma = 3\n").unwrap();
    let out = bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.gamma"));
}

#[test]
fn oracle_run_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("oracle.cfg");
    fs::write(&cfg, "env.family = bandit\noracle.tasks = 5\nseeds = 1, 2\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["oracle", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .args(["--seed", "7"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"config_hash\""));
    assert!(out_dir.join("bound_reports_seed7.jsonl").exists());
    assert!(!out_dir.join("bound_reports_seed1.jsonl").exists());
}

#[test]
fn runtime_failure_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("ck.json");
    fs::write(&ck, "{not json").unwrap();
    let cfg = dir.path().join("eval.cfg");
    fs::write(&cfg, "env.family = bandit\neval.checkpoint = ck.json\n").unwrap();
    let out = bin()
        .args(["evaluate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

fn shipped(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn shipped_configs_parse() {
    for entry in fs::read_dir(shipped("")).unwrap() {
        let path = entry.unwrap().path();
        if let Err(e) = bottleneck_core::harness::ExperimentConfig::load(&path) {
            panic!("{}: {e}", path.display());
        }
    }
}

#[test]
fn bandit_config_trains_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["train", "--config"])
        .arg(shipped("bandit.cfg"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eval: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("eval.json")).unwrap()).unwrap();
    assert!(eval["success_rate"].as_f64().unwrap() > 0.95, "{eval}");
    let metrics = fs::read_to_string(dir.path().join("metrics_seed0.csv")).unwrap();
    assert!(metrics.starts_with("step,episodes,success_rate,mean_return,mean_kl,mean_entropy,wall_clock_s\n"));
}
