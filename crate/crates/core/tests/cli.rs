mod support;

use std::path::Path;
use std::process::{Command, Output};

fn hdlforge(args: &[&str], env: Option<(&str, &Path)>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hdlforge"));
    cmd.args(args).env_remove("HDLFORGE_CONFIG");
    if let Some((k, v)) = env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn fixture(rel: &str) -> String {
    support::mockgen::fixtures().join(rel).display().to_string()
}

#[test]
fn check_exit_codes() {
    let ok = hdlforge(&["check", &fixture("samples/c_adder4.v")], None);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("Accepted"));

    let bad = hdlforge(&["check", &fixture("syntax_errors/missing_semicolon.v")], None);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains(":3:15: error[syntax]"));

    let json = hdlforge(&["check", "--json", &fixture("syntax_errors/undeclared.v")], None);
    let first: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&json.stdout).lines().next().unwrap()).unwrap();
    assert_eq!(first["severity"], "error");
    assert_eq!(first["line"], 4);
}

#[test]
fn usage_and_config_errors_exit_2() {
    assert_eq!(hdlforge(&["frobnicate"], None).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[dedup]\nnum_perms = 128\nbands = 30\n").unwrap();
    let ws = dir.path().join("ws");
    let out = hdlforge(&["--config", bad.to_str().unwrap(), "--workspace", ws.to_str().unwrap(), "dedup"], None);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn environment_config_takes_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    let bad = dir.path().join("bad.toml");
    std::fs::write(&good, "seed = 3\n").unwrap();
    std::fs::write(&bad, "unknown_key = true\n").unwrap();
    let ws = dir.path().join("ws");
    let args = ["--config", good.to_str().unwrap(), "--workspace", ws.to_str().unwrap(), "ingest", "--input", &fixture("corpus")];
    assert_eq!(hdlforge(&args, None).status.code(), Some(0));
    assert_eq!(hdlforge(&args, Some(("HDLFORGE_CONFIG", &bad))).status.code(), Some(2));
}

#[test]
fn missing_stage_input_names_the_producer() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let out = hdlforge(&["--workspace", ws.to_str().unwrap(), "augment"], None);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("decontaminated.jsonl") && err.contains("hdlforge decontaminate"), "{err}");
}

#[test]
fn ingest_writes_manifest_with_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let out = hdlforge(&["--workspace", ws.to_str().unwrap(), "--seed", "11", "ingest", "--input", &fixture("corpus")], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(ws.join("manifests/ingest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "ingest");
    assert_eq!(m["seed"], 11);
    for name in ["corpus.jsonl", "ingest_log.jsonl"] {
        let h = m["outputs"][name].as_str().unwrap_or_else(|| panic!("{m}"));
        assert_eq!(h, hdlforge::util::sha256_hex(&std::fs::read(ws.join(name)).unwrap()));
    }
    assert!(ws.join("manifests/ingest.timings.json").exists());
}

#[test]
fn truth_table_and_mutate_commands() {
    let tt = hdlforge(&["truth-table", &fixture("samples/c_max2.v")], None);
    assert_eq!(tt.status.code(), Some(0));
    let text = String::from_utf8_lossy(&tt.stdout);
    assert_eq!(text.lines().count(), 1 + 64);

    let mu = hdlforge(&["mutate", "--testbench", &fixture("samples/c_mux_hier.v")], None);
    assert_eq!(mu.status.code(), Some(0), "{}", String::from_utf8_lossy(&mu.stderr));
    let text = String::from_utf8_lossy(&mu.stdout);
    assert!(text.contains("\"detectable\":true"), "{text}");
}
