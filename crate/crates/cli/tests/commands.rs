//! The binary end to end: exit codes, files written, determinism, tampering.

use std::path::{Path, PathBuf};
use std::process::Command;

use doacert::Archive;
use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_doacert")).args(args).output().unwrap();
    out.status.code().unwrap_or(-1)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn approx_writes_an_enclosure_record() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&["approx", s(&config("example2.toml")), "--out", s(dir.path())]);
    assert_eq!(code, 0);
    let rec = read_json(&dir.path().join("approx.json"));
    assert_eq!(rec["status"], "pass");
    let e = &rec["result"]["enclosures"][0];
    assert_eq!(e["function"], "cos(x1)");
    assert!(e["bound"].as_f64().unwrap() < e["taylor_bound"].as_f64().unwrap());
    assert_eq!(
        run(&[
            "verify",
            s(&dir.path().join("approx.archive.json")),
            "--out",
            s(dir.path())
        ]),
        0
    );
}

#[test]
fn record_keys_keep_declaration_order() {
    let dir = tempfile::tempdir().unwrap();
    run(&["approx", s(&config("example2.toml")), "--out", s(dir.path())]);
    let text = std::fs::read_to_string(dir.path().join("approx.json")).unwrap();
    let pos = |k: &str| text.find(&format!("\"{}\"", k)).unwrap();
    assert!(pos("command") < pos("system_hash"));
    assert!(pos("system_hash") < pos("status"));
    assert!(pos("status") < pos("result"));
}

#[test]
fn fixed_workflow_certifies_verifies_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("example4.toml");
    for dir in [&a, &b] {
        assert_eq!(
            run(&["certify-fixed", s(&cfg), "--degree", "4", "--out", s(dir.path())]),
            0
        );
    }
    for file in ["certify-fixed.json", "certify-fixed.archive.json"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert!(x == y, "{} differs between identical runs", file);
    }
    let rec = read_json(&a.path().join("certify-fixed.json"));
    assert_eq!(rec["status"], "certified");
    let level = rec["result"]["level"].as_f64().unwrap();
    let upsilon = rec["result"]["upper"]["upsilon"].as_f64().unwrap();
    assert!(level > 0.0 && level <= upsilon);

    let archive = a.path().join("certify-fixed.archive.json");
    assert_eq!(run(&["verify", s(&archive), "--out", s(a.path())]), 0);
    assert_eq!(
        run(&["validate", s(&archive), "--samples", "100", "--out", s(a.path())]),
        0
    );
    assert_eq!(
        run(&["boundary", s(&archive), "--count", "90", "--out", s(a.path())]),
        0
    );

    let csv = std::fs::read_to_string(a.path().join("boundary.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x1,x2"));
    let pts: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(pts.len(), 90);
    for p in pts {
        // V = x1² + x2²
        assert!((p[0] * p[0] + p[1] * p[1] - level).abs() <= 1e-6);
    }
}

#[test]
fn tampered_archives_fail_verification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("example4.toml");
    assert_eq!(
        run(&["certify-fixed", s(&cfg), "--degree", "4", "--out", s(dir.path())]),
        0
    );
    let path = dir.path().join("certify-fixed.archive.json");
    let original = Archive::load(&path).unwrap();

    // edited level without resealing: the digest catches it
    let mut edited = original.clone();
    edited.body.certificate.as_mut().unwrap().level *= 1.5;
    let p1 = dir.path().join("edited.json");
    std::fs::write(&p1, edited.to_json().unwrap()).unwrap();
    assert_eq!(run(&["verify", s(&p1), "--out", s(dir.path())]), 1);

    // resealed, so only the identities can catch it
    edited.reseal().unwrap();
    std::fs::write(&p1, edited.to_json().unwrap()).unwrap();
    assert_eq!(run(&["verify", s(&p1), "--out", s(dir.path())]), 1);
    let rec = read_json(&dir.path().join("verify.json"));
    assert_eq!(rec["result"]["digest_ok"], true);
    assert_eq!(rec["status"], "fail");

    // a different system under the same certificate
    let mut swapped = original.clone();
    swapped.body.config = swapped
        .body
        .config
        .replace("0.5*exp(x1)", "0.4*exp(x1)")
        .replace("- 0.5\"", "- 0.4\"");
    swapped.body.system_hash = doacert::archive::sha256_hex(swapped.body.config.as_bytes());
    swapped.reseal().unwrap();
    std::fs::write(&p1, swapped.to_json().unwrap()).unwrap();
    assert_eq!(run(&["verify", s(&p1), "--out", s(dir.path())]), 1);
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["approx", "/nonexistent.toml"]), 2);
    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "[variables]\nstates = [\"x1\"]\n[dynamics]\nx1 = \"tan(x1)\"\n[domain]\nx1 = [-1.0, 1.0]\n",
    )
    .unwrap();
    assert_eq!(run(&["approx", s(&bad), "--out", s(dir.path())]), 2);
    assert_eq!(run(&["certify-fixed", s(&config("example4.toml")), "--tol", "2"]), 2);
    assert_eq!(run(&["no-such-command"]), 2);
}

#[test]
fn substitute_reports_inclusion() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&[
        "substitute",
        s(&config("example6.toml")),
        "--samples",
        "2000",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code, 0);
    let rec = read_json(&dir.path().join("substitute.json"));
    assert_eq!(rec["result"]["vertex_systems"], 4);
    assert_eq!(rec["result"]["inclusion"]["violations"], 0);
}
