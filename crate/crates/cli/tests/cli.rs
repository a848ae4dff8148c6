use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[experiment]
num_clients = 4
participation = 0.5
rounds = 3
[data]
source = "synthetic"
alpha = 1.0
per_class = 20
test_per_class = 5
[model]
hidden = [8]
"#;

fn feddual(args: &[&str], root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_feddual"));
    cmd.args(args).env("RUST_LOG", "warn").env_remove("FEDDUAL_OUT_ROOT");
    if let Some(r) = root {
        cmd.env("FEDDUAL_OUT_ROOT", r);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn run_then_report_and_landscape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("run");
    let o = feddual(&["run", "--config", &cfg, "--seed", "3", "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["rounds"], 3);
    for f in ["metrics.jsonl", "checkpoint.bin", "config.toml", "manifest.json", "barycenter_trace.jsonl"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([3]));

    let o = feddual(&["report", out.to_str().unwrap(), "--target", "0.0"], None);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["complete"], true);
    assert_eq!(report["rounds_to_target"], 1);
    assert!(out.join("norms.csv").is_file());

    let o = feddual(&["landscape", out.to_str().unwrap(), "--grid", "3"], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("landscape.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn relative_output_goes_under_the_env_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let o = feddual(
        &["run", "--config", &cfg, "--rounds", "1", "--algorithm", "fedavg", "--out", "nested/a"],
        Some(dir.path()),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("nested/a/metrics.jsonl").is_file());
}

#[test]
fn sweep_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("sw");
    let o = feddual(
        &["sweep", "--config", &cfg, "--rounds", "1", "--seeds", "1,2", "--out", out.to_str().unwrap()],
        None,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(s["seeds"], serde_json::json!([1, 2]));
    assert!(out.join("seed-1/metrics.jsonl").is_file() && out.join("seed-2/metrics.jsonl").is_file());
}

#[test]
fn presets_print_configs() {
    let o = feddual(&["preset", "heterogeneity-sweep", "--rounds", "2"], None);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.matches("\n# alpha-").count() + text.starts_with("# alpha-") as usize, 4);
    assert_eq!(text.matches("rounds = 2").count(), 4);
    let o = feddual(&["preset", "nope"], None);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("ablation-modules"));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "[data]\nalpha = 0.0\n");
    let o = feddual(&["run", "--config", &bad], None);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("data.alpha"));
    let unknown = write_config(dir.path(), "[data]\nalhpa = 1.0\n");
    assert_eq!(code(&feddual(&["run", "--config", &unknown], None)), 2);
    assert_eq!(code(&feddual(&["run", "--mask", "last x"], None)), 2);
    assert_eq!(code(&feddual(&["run", "--alpha", "-1", "--rounds", "1"], None)), 2);
}

#[test]
fn runtime_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent");
    assert_eq!(code(&feddual(&["report", missing.to_str().unwrap()], None)), 3);
    // IDX source pointing at files that do not exist
    let cfg = write_config(
        dir.path(),
        "[data]\nsource = \"idx\"\ntrain_images = \"/nonexistent/x\"\n",
    );
    let o = feddual(&["run", "--config", &cfg, "--out", dir.path().join("r").to_str().unwrap()], None);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/x"));
}
