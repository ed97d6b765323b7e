// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
name = "small"
prefixes_per_iteration = 12

[grm_stage]
max_iterations = 4

[dut_stage]
max_iterations = 5

[pretrain]
corpus_documents = 300
epochs = 20
"#;

fn grmfuzz(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grmfuzz")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn witness(name: &str) -> String {
    format!("{}/witnesses/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

const ARTIFACTS: [&str; 6] = [
    "config.lock.json",
    "reports/iterations.csv",
    "mismatches/new.jsonl",
    "filter.json",
    "testcases.jsonl",
    "checkpoints/latest/policy.bin",
];

#[test]
fn run_is_reproducible_byte_for_byte() {
    let dir = setup();
    for out in ["a", "b"] {
        let o = grmfuzz(&["run", "--config", "small.toml", "--seed", "7", "--out", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ARTIFACTS {
        let a = fs::read(dir.path().join("a/small").join(f)).unwrap();
        let b = fs::read(dir.path().join("b/small").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let csv = fs::read_to_string(dir.path().join("a/small/reports/iterations.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 + 5);
    assert!(!csv.contains(&dir.path().display().to_string()));

    let r = grmfuzz(&["report", "a/small"], dir.path());
    assert!(r.status.success());
    assert!(stdout(&r).contains("iterations: 4 GRM, 5 DUT"));
}

#[test]
fn usage_and_configuration_errors_exit_with_two() {
    let dir = setup();
    assert_eq!(grmfuzz(&["run", "--config", "missing.toml"], dir.path()).status.code(), Some(2));
    assert_eq!(grmfuzz(&["ablate", "no-such-preset"], dir.path()).status.code(), Some(2));
    assert_eq!(grmfuzz(&["run", "--bugs", "V9"], dir.path()).status.code(), Some(2));
    fs::write(dir.path().join("bad.toml"), "root_fraction = 3.0\n").unwrap();
    assert_eq!(grmfuzz(&["run", "--config", "bad.toml"], dir.path()).status.code(), Some(2));
}

#[test]
fn replay_prints_the_first_divergence() {
    let dir = setup();
    let v1 = witness("v1.s");
    let o = grmfuzz(&["replay", &v1], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("grm 0x12 dut 0x78"), "{text}");
    assert!(text.lines().any(|l| l.starts_with(">>") && l.contains("lb ")));

    let clean = grmfuzz(&["replay", &v1, "--bugs", "none"], dir.path());
    assert!(stdout(&clean).contains("traces identical"));

    let hash = text.lines().next().unwrap().trim_start_matches("program ").to_string();
    let ok = grmfuzz(&["replay", &v1, "--expect-hash", &hash], dir.path());
    assert!(ok.status.success());
    let refused = grmfuzz(&["replay", &v1, "--expect-hash", &hash, "--seed", "2"], dir.path());
    assert!(!refused.status.success());
    assert!(String::from_utf8_lossy(&refused.stderr).contains("does not match"));
}

#[test]
fn triage_classifies_and_suppresses_on_rerun() {
    let dir = setup();
    let o = grmfuzz(&["run", "--config", "small.toml", "--seed", "3", "--out", "o"], dir.path());
    assert!(o.status.success());
    let list = stdout(&grmfuzz(&["triage", "list", "o/small"], dir.path()));
    let ids: Vec<&str> = list.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert!(!ids.is_empty());
    for id in &ids {
        let c = grmfuzz(&["triage", "classify", "o/small", "--id", id, "--class", "bug"], dir.path());
        assert!(c.status.success());
    }
    let conflict = grmfuzz(&["triage", "classify", "o/small", "--id", ids[0], "--class", "fp"], dir.path());
    assert_eq!(conflict.status.code(), Some(2));
    let forced = grmfuzz(&["triage", "classify", "o/small", "--id", ids[0], "--class", "fp", "--override"], dir.path());
    assert!(forced.status.success());
    let replay = grmfuzz(&["triage", "replay", "o/small", "--id", ids[0]], dir.path());
    assert!(stdout(&replay).contains("first divergence"));

    fs::copy(dir.path().join("o/small/filter.json"), dir.path().join("known.json")).unwrap();
    let again =
        grmfuzz(&["run", "--config", "small.toml", "--seed", "3", "--out", "p", "--filter", "known.json"], dir.path());
    assert!(again.status.success());
    assert_eq!(fs::read_to_string(dir.path().join("p/small/mismatches/new.jsonl")).unwrap(), "");
}

#[test]
fn ablation_presets_write_per_arm_csvs() {
    let dir = setup();
    let o = grmfuzz(&["ablate", "no-grm", "--config", "small.toml", "--out", "o"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("o/small-no-grm/iterations.csv")).unwrap();
    assert!(csv.starts_with("arm,iteration,stage,cum_coverage,coverage_pct,testcase_coverage,invalid_rate,extendable_rate"));
    assert!(csv.lines().any(|l| l.starts_with("grm,")));
    assert!(csv.lines().any(|l| l.starts_with("no-grm,0,DUT")));
    let summary = fs::read_to_string(dir.path().join("o/small-no-grm/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);

    let o = grmfuzz(&["ablate", "robustness-5seeds", "--config", "small.toml", "--out", "o"], dir.path());
    assert!(o.status.success());
    let spread = fs::read_to_string(dir.path().join("o/small-robustness-5seeds/spread.csv")).unwrap();
    assert!(spread.starts_with("metric,mean,variance,cv"));
    let summary = fs::read_to_string(dir.path().join("o/small-robustness-5seeds/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 6);
}
