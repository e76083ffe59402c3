//! Black-box tests of the `shardsim` binary: exit codes, diagnostics and
//! artifact layout.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shardsim"))
}

fn example_scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/example.json")
}

fn write_scenario(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL: &str = r#"{
  "schema_version": 1,
  "seed": 5,
  "ticks": 6,
  "clusters": [{"size": 4}],
  "tx_rate": 1,
  "total_tx_reward": 10,
  "portion_rewards": [10]
}"#;

#[test]
fn run_writes_all_four_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "small.json", SMALL);
    let out_dir = dir.path().join("artifacts");

    let out = bin()
        .args(["run"])
        .arg(&scenario)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    for name in ["metrics.csv", "events.log", "chain.dump", "summary.txt"] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }

    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with(
        "tick,txs_decided,txs_accepted,tx_accuracy_cum,claims_decided,claim_accuracy_cum,undefined_claims,total_stake\n"
    ));
    assert_eq!(metrics.lines().count(), 7); // header + one row per tick
}

#[test]
fn bundled_example_scenario_runs_clean() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run"])
        .arg(example_scenario())
        .arg("--out")
        .arg(dir.path().join("example"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
}

#[test]
fn seed_override_runs_reproduce_the_event_log() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "small.json", SMALL);

    let mut logs = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = dir.path().join(sub);
        let out = bin()
            .args(["run"])
            .arg(&scenario)
            .args(["--override", "seed=42", "--out"])
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr_of(&out));
        logs.push(std::fs::read(out_dir.join("events.log")).unwrap());
    }
    assert_eq!(logs[0], logs[1]);
    assert!(!logs[0].is_empty());
}

#[test]
fn malformed_scenario_exits_one_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(
        dir.path(),
        "typo.json",
        r#"{"schema_version": 1, "ticks": 5, "tick_rate": 2}"#,
    );
    let out = bin().args(["run"]).arg(&scenario).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("tick_rate"), "{}", stderr_of(&out));
}

#[test]
fn float_parameters_exit_one_and_name_the_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(
        dir.path(),
        "float.json",
        r#"{"schema_version": 1, "ticks": 5, "invalid_tx_fraction": 0.25}"#,
    );
    let out = bin().args(["validate"]).arg(&scenario).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("invalid_tx_fraction"), "{err}");
}

#[test]
fn validate_distinguishes_ok_violation_and_unreadable() {
    let dir = tempfile::tempdir().unwrap();

    let ok = write_scenario(dir.path(), "ok.json", SMALL);
    let out = bin().args(["validate"]).arg(&ok).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));

    // 2 always-flip of 4 exceeds the floor(4/3) = 1 bound.
    let byzantine = write_scenario(
        dir.path(),
        "byzantine.json",
        r#"{
          "schema_version": 1, "ticks": 5,
          "clusters": [{"size": 4, "always_flip": 2}],
          "tx_rate": 1, "total_tx_reward": 10, "portion_rewards": [10]
        }"#,
    );
    let out = bin().args(["validate"]).arg(&byzantine).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("byzantine bound exceeded"), "{err}");
    assert!(err.contains("byzantine_waiver"), "{err}");

    let out = bin()
        .args(["validate"])
        .arg(dir.path().join("absent.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_on_missing_file_exits_two() {
    let out = bin()
        .args(["run", "/nonexistent/scenario.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_override_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "small.json", SMALL);
    let out = bin()
        .args(["run"])
        .arg(&scenario)
        .args(["--override", "warp_speed=9"])
        .arg("--out")
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("unknown parameter `warp_speed`"),
        "{}",
        stderr_of(&out)
    );
}

#[test]
fn sweep_writes_per_value_directories_and_a_combined_table() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "small.json", SMALL);
    let out_dir = dir.path().join("sweep");

    let out = bin()
        .args(["sweep"])
        .arg(&scenario)
        .args(["--parameter", "seed", "--values", "1..3", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));

    let table = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert!(table
        .starts_with("value,tx_accuracy,claim_accuracy,throughput,minted,burned,stake_delta\n"));
    assert_eq!(table.lines().count(), 4); // header + three values
    for value in 1..=3 {
        assert!(out_dir
            .join(format!("seed={value}"))
            .join("metrics.csv")
            .is_file());
    }
}

#[test]
fn sweep_rejects_unknown_parameters_and_empty_values() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "small.json", SMALL);

    let out = bin()
        .args(["sweep"])
        .arg(&scenario)
        .args(["--parameter", "chaos", "--values", "1..2", "--out"])
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("unknown parameter `chaos`"));

    let out = bin()
        .args(["sweep"])
        .arg(&scenario)
        .args(["--parameter", "seed", "--values", "  ", "--out"])
        .arg(dir.path().join("y"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("empty sweep value list"));
}

#[test]
fn out_directory_defaults_to_the_environment_variable() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "small.json", SMALL);
    let out_dir = dir.path().join("from-env");

    let out = bin()
        .args(["run"])
        .arg(&scenario)
        .env("SHARDSIM_OUT", &out_dir)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(out_dir.join("metrics.csv").is_file());
}
