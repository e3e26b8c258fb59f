//! Command behaviour: exit codes, validation, missing artifacts and stamping.

mod common;

use std::fs;
use std::process::Command;

use common::{staged_fixture, utn};

fn binary(dir: &std::path::Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_utn"))
        .arg("--config")
        .arg(dir.join("utn.toml"))
        .args(args)
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn report_without_artifacts_lists_required_stages() {
    let dir = staged_fixture();
    let (code, err) = binary(dir.path(), &["report"]);
    assert_eq!(code, 2);
    for stage in ["cluster", "activity", "spatial", "temporal"] {
        assert!(err.contains(stage), "{err}");
    }
}

#[test]
fn missing_upstream_artifact_names_the_command() {
    let dir = staged_fixture();
    assert_eq!(utn(dir.path(), &["synth"]), 0);
    let (code, err) = binary(dir.path(), &["variability"]);
    assert_eq!(code, 2);
    assert!(err.contains("utn communities"), "{err}");
}

#[test]
fn validation_reports_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("utn.toml"),
        "[community]\nruns = 0\n[spatial]\nbeta = 0.0\n[inputs]\ntrips = \"nope.csv\"\n",
    )
    .unwrap();
    let (code, err) = binary(dir.path(), &["ingest"]);
    assert_eq!(code, 1);
    for needle in ["community.runs", "spatial.beta", "nope.csv", "inputs.stations", "inputs.calendar"] {
        assert!(err.contains(needle), "missing {needle}: {err}");
    }
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("utn.toml"), "sead = 1\n").unwrap();
    assert_eq!(binary(dir.path(), &["ingest"]).0, 1);
}

#[test]
fn planted_day_categories_are_recovered() {
    let dir = staged_fixture();
    for stage in ["synth", "ingest", "flows", "communities", "variability", "cluster"] {
        assert_eq!(utn(dir.path(), &[stage]), 0, "{stage}");
    }
    let cluster: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/cluster.json")).unwrap()).unwrap();
    let truth: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/synth/truth.json")).unwrap()).unwrap();
    assert_eq!(cluster["chosen_k"], 2);
    let categories = cluster["categories"].as_array().unwrap();
    let singleton: Vec<&serde_json::Value> = categories.iter().filter(|c| c.as_array().unwrap().len() == 1).collect();
    assert_eq!(singleton.len(), 1);
    assert_eq!(singleton[0][0], truth["outlier_days"][0]);
}

#[test]
fn outputs_carry_the_config_hash() {
    let dir = staged_fixture();
    for stage in ["synth", "ingest", "flows", "activity"] {
        assert_eq!(utn(dir.path(), &[stage]), 0);
    }
    let manifest = fs::read_to_string(dir.path().join("out/manifest.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = manifest.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 4);
    let hash = records[0]["config_hash"].as_str().unwrap().to_string();
    for f in ["out/trips.csv", "out/flows.csv", "out/patterns.csv", "out/chains.csv", "data/stations.csv"] {
        let text = fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(text.starts_with(&format!("# config_hash={hash} seed=")), "{f}");
    }
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/activity.json")).unwrap()).unwrap();
    assert_eq!(json["config_hash"], hash.as_str());

    // A seed override changes the stamp.
    assert_eq!(utn(dir.path(), &["--seed", "7", "activity"]), 0);
    let text = fs::read_to_string(dir.path().join("out/patterns.csv")).unwrap();
    assert!(!text.contains(&hash) && text.contains("seed=7"));
}

#[test]
fn help_exits_cleanly() {
    assert_eq!(utn_cli::run(["utn", "--help"]), 0);
    assert_eq!(utn_cli::run(["utn", "frobnicate"]), 1);
}
