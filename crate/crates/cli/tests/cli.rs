//! End-to-end tests of the `uavnet` binary.

use std::path::Path;
use std::process::{Command, Output};

fn uavnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uavnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn demo_scenario_json(seed: u64) -> String {
    format!(
        r#"{{
  "seed": {seed},
  "cluster_count": 2,
  "uavs_per_cluster": 4,
  "periods": 5,
  "task_rate": 2,
  "fault_schedule": [
    {{ "period": 2, "cluster": 0, "target": {{ "uav": 2 }}, "kind": "disconnect" }},
    {{ "period": 4, "cluster": 0, "target": {{ "uav": 2 }}, "kind": "reconnect" }}
  ]
}}"#
    )
}

fn read_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn run_writes_reports_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("scenario.json");
    std::fs::write(&scen, demo_scenario_json(42)).unwrap();

    let out1 = tmp.path().join("out1");
    let r = uavnet(&["run", "--scenario", scen.to_str().unwrap(), "--out", out1.to_str().unwrap()]);
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    for f in ["periods.csv", "integrity.csv", "throughput.csv", "chain.bin", "manifest.json"] {
        assert!(out1.join(f).exists(), "{f} missing");
    }

    let out2 = tmp.path().join("out2");
    let r = uavnet(&["run", "--scenario", scen.to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    assert!(r.status.success());
    assert_eq!(read_outputs(&out1), read_outputs(&out2), "same inputs, same bytes");
}

#[test]
fn threat_model_violation_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("bad.json");
    std::fs::write(
        &scen,
        r#"{
  "seed": 1,
  "cluster_count": 2,
  "uavs_per_cluster": 4,
  "periods": 5,
  "task_rate": 1,
  "fault_schedule": [
    { "period": 2, "cluster": 0, "target": "head", "kind": "disconnect" },
    { "period": 2, "cluster": 0, "target": { "uav": 2 }, "kind": "disconnect" }
  ]
}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let r = uavnet(&["run", "--scenario", scen.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("threat-model violation"), "{err}");
}

#[test]
fn parse_error_reports_location() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("broken.json");
    std::fs::write(&scen, "{ \"seed\": 1,\n  \"cluster_count\": oops\n}").unwrap();
    let out = tmp.path().join("out");
    let r = uavnet(&["run", "--scenario", scen.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn verify_chain_accepts_exported_and_rejects_tampered() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("scenario.json");
    std::fs::write(&scen, demo_scenario_json(5)).unwrap();
    let out = tmp.path().join("out");
    let r = uavnet(&["run", "--scenario", scen.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(r.status.success());

    let chain = out.join("chain.bin");
    let r = uavnet(&["verify-chain", "--file", chain.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stdout));
    assert!(String::from_utf8_lossy(&r.stdout).starts_with("OK:"));

    // Flip one content byte near the end (inside the last transaction).
    let mut bytes = std::fs::read(&chain).unwrap();
    let n = bytes.len();
    bytes[n - 10] ^= 0x01;
    let tampered = out.join("tampered.bin");
    std::fs::write(&tampered, bytes).unwrap();
    let r = uavnet(&["verify-chain", "--file", tampered.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stdout).starts_with("INVALID:"));

    // Truncated file: parse error with a byte offset.
    let bytes = std::fs::read(&chain).unwrap();
    let cut = out.join("cut.bin");
    std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    let r = uavnet(&["verify-chain", "--file", cut.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("parse error at byte"));
}

#[test]
fn unknown_preset_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let r = uavnet(&["preset", "--name", "nope", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("unknown preset"));
}

#[test]
fn election_preset_writes_csv_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let out1 = tmp.path().join("a");
    let out2 = tmp.path().join("b");
    for out in [&out1, &out2] {
        let r = uavnet(&[
            "preset",
            "--name",
            "delay_election_fig6a",
            "--seed",
            "13",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let a = std::fs::read(out1.join("elections.csv")).unwrap();
    let b = std::fs::read(out2.join("elections.csv")).unwrap();
    assert_eq!(a, b, "parallel preset must be reproducible");
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("protocol,cluster_count,sample_idx,delay_ms"));
    assert!(text.contains("\nraft,4,0,"));
    assert!(text.contains("\npow,32,29,"));
}

#[test]
fn every_preset_finishes_inside_budget() {
    let tmp = tempfile::tempdir().unwrap();
    for name in [
        "robustness_table2",
        "delay_election_fig6a",
        "delay_auth_fig6b",
        "energy_cluster_fig7a",
        "energy_keylen_fig7b",
    ] {
        let out = tmp.path().join(name);
        let started = std::time::Instant::now();
        let r = uavnet(&["preset", "--name", name, "--seed", "7", "--out", out.to_str().unwrap()]);
        let elapsed = started.elapsed();
        assert!(r.status.success(), "{name}: {}", String::from_utf8_lossy(&r.stderr));
        assert!(
            elapsed.as_secs() < 60,
            "{name} took {elapsed:?}, budget is 60 s"
        );
        assert!(out.join("preset_manifest.json").exists());
    }
}

#[test]
fn table2_preset_emits_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t2");
    let r = uavnet(&[
        "preset",
        "--name",
        "robustness_table2",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let matrix = std::fs::read_to_string(out.join("table2.csv")).unwrap();
    let lines: Vec<&str> = matrix.lines().collect();
    assert_eq!(lines.len(), 12, "header + 11 UAVs");
    assert!(lines[0].starts_with("uav,p1,"));
    assert!(lines[0].ends_with(",p50"));

    // Column sums of member cells equal the head cell every period: the
    // double-backup balance visible right in the emitted matrix.
    let integrity = std::fs::read_to_string(out.join("integrity.csv")).unwrap();
    for line in integrity.lines().skip(1) {
        assert!(line.ends_with(",1"), "integrity violated: {line}");
    }
}
