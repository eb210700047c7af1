use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use loglip_cli::Manifest;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_loglip");

const RATE: &str = r#"{
  "schema_version": 1,
  "seed": 1,
  "field": {"key": "constant", "params": {"drift": [0.0], "diffusion": [1.0], "noise_dim": 1}},
  "experiment": {"kind": "rate", "params": {
    "x0": [0.0],
    "event": {"kind": "terminal_hit", "target": [1.0], "tol": 0.01},
    "optimizer": {"knots": 8, "restarts": 1}
  }}
}"#;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn loglip(args: &[&str], env_out: Option<&Path>, cwd: &Path) -> Output {
    let mut c = Command::new(BIN);
    c.args(args).current_dir(cwd).env_remove("LOGLIP_OUT_DIR");
    if let Some(d) = env_out {
        c.env("LOGLIP_OUT_DIR", d);
    }
    c.output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn dry_run_reports_digest_without_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let m = write(tmp.path(), "m.json", RATE);
    let out = tmp.path().join("out");
    let o = loglip(&["rate", "--manifest", m.to_str().unwrap(), "--out", out.to_str().unwrap(), "--dry-run"], None, tmp.path());
    assert!(o.status.success());
    let v = stdout_json(&o);
    assert_eq!(v["status"], "valid");
    assert_eq!(v["manifest_sha256"], Manifest::from_json(RATE).unwrap().digest());
    assert!(!out.exists());
}

#[test]
fn every_artifact_carries_the_digest() {
    let tmp = tempfile::tempdir().unwrap();
    let m = write(tmp.path(), "m.json", RATE);
    let out = tmp.path().join("out");
    let o = loglip(&["rate", "--manifest", m.to_str().unwrap(), "--out", out.to_str().unwrap()], None, tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let digest = Manifest::from_json(RATE).unwrap().digest();
    let files = stdout_json(&o)["files"].as_array().unwrap().clone();
    assert_eq!(files.len(), 3);
    for name in ["rate.csv", "control.csv"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        assert_eq!(text.lines().next().unwrap(), format!("# manifest_sha256={digest}"));
    }
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["manifest_sha256"], digest);
    assert_eq!(summary["kind"], "rate");
    assert_eq!(summary["status"], "ok");
}

#[test]
fn output_directory_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let with_dir = RATE.replacen("\"seed\": 1,", "\"seed\": 1, \"output_dir\": \"from-manifest\",", 1);
    let m = write(tmp.path(), "m.json", &with_dir);
    let ms = m.to_str().unwrap();

    assert!(loglip(&["rate", "--manifest", ms], None, tmp.path()).status.success());
    assert!(tmp.path().join("from-manifest/rate.csv").exists());

    let env_dir = tmp.path().join("from-env");
    assert!(loglip(&["rate", "--manifest", ms], Some(&env_dir), tmp.path()).status.success());
    assert!(env_dir.join("rate.csv").exists());

    let flag_dir = tmp.path().join("from-flag");
    let o = loglip(&["rate", "--manifest", ms, "--out", flag_dir.to_str().unwrap()], Some(&env_dir), tmp.path());
    assert!(o.status.success());
    assert!(flag_dir.join("rate.csv").exists());

    let plain = write(tmp.path(), "plain.json", RATE);
    assert!(loglip(&["rate", "--manifest", plain.to_str().unwrap()], None, tmp.path()).status.success());
    assert!(tmp.path().join("loglip-out/rate.csv").exists());
}

#[test]
fn validation_errors_exit_2_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("unknown-key.json", RATE.replace("\"seed\"", "\"sede\""), "rate"),
        ("bad-version.json", RATE.replace("\"schema_version\": 1", "\"schema_version\": 9"), "rate"),
        ("bad-field.json", RATE.replace("\"constant\"", "\"no_such_field\""), "rate"),
        ("wrong-kind.json", RATE.to_string(), "ldp"),
        ("bad-dim.json", RATE.replace("\"x0\": [0.0]", "\"x0\": [0.0, 1.0]"), "rate"),
    ];
    for (name, text, kind) in cases {
        let m = write(tmp.path(), name, &text);
        let o = loglip(&[kind, "--manifest", m.to_str().unwrap(), "--dry-run"], None, tmp.path());
        assert_eq!(o.status.code(), Some(2), "{name}");
        let diag: Value = serde_json::from_slice(&o.stderr).unwrap();
        assert_eq!(diag["status"], "error", "{name}");
        assert!(diag["message"].as_str().is_some_and(|s| !s.is_empty()), "{name}");
    }
    let o = loglip(&["rate", "--manifest", "/nonexistent/m.json"], None, tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3_and_writes_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let text = RATE
        .replace("\"tol\": 0.01", "\"tol\": 0.0")
        .replace("\"restarts\": 1", "\"restarts\": 1, \"max_iterations\": 1, \"stages\": 1, \"residual_tol\": 1e-12");
    let m = write(tmp.path(), "m.json", &text);
    let out = tmp.path().join("out");
    let o = loglip(&["rate", "--manifest", m.to_str().unwrap(), "--out", out.to_str().unwrap()], None, tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let diag: Value = serde_json::from_str(&fs::read_to_string(out.join("diagnostic.json")).unwrap()).unwrap();
    assert_eq!(diag["manifest_sha256"], Manifest::from_json(&text).unwrap().digest());
}

#[test]
fn shipped_examples_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("manifests");
    let mut seen = 0;
    for sub in ["acceptance", "examples"] {
        for e in fs::read_dir(root.join(sub)).unwrap() {
            let p = e.unwrap().path();
            let m = Manifest::from_json(&fs::read_to_string(&p).unwrap())
                .unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            loglip_cli::validate(&m).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            seen += 1;
        }
    }
    assert!(seen >= 13);
}

#[test]
fn sine_bound_accepts_its_alias() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"{"schema_version": 1, "experiment": {"kind": "lemma24", "params": {"lo": 0.001, "hi": 0.3, "count": 4, "terms": 1000}}}"#;
    let m = write(tmp.path(), "m.json", text);
    let canonical = Manifest::from_json(&text.replace("lemma24", "sine_bound")).unwrap().digest();
    for cmd in ["lemma24", "sine-bound"] {
        let out = tmp.path().join(cmd);
        let o = loglip(&[cmd, "--manifest", m.to_str().unwrap(), "--out", out.to_str().unwrap()], None, tmp.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(stdout_json(&o)["manifest_sha256"], canonical);
        assert!(out.join("sine_bound.csv").exists());
    }
}
