use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rebuild(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rebuild"))
        .arg("--data-dir")
        .arg(dir)
        .arg("--json")
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn generate_then_train_writes_two_plan_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = rebuild(dir.path(), &["generate", "--units", "20", "--seed", "7"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["dataset"]["cycle"], 1);

    let out = rebuild(
        dir.path(),
        &["train", "--budget", "100000", "--horizon", "60", "--alternatives", "2", "--episodes", "300"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let summary = json(&out);
    assert_eq!(summary["plans"].as_array().unwrap().len(), 2);
    let mut files: Vec<_> = std::fs::read_dir(dir.path().join("plans"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(files, ["c1-p1.json", "c1-p2.json"]);

    let export: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("plans/c1-p1.json")).unwrap()).unwrap();
    assert_eq!(export["id"], "c1-p1");
    assert!(export["social_benefit"].as_f64().unwrap() > 0.0);

    let listed = json(&rebuild(dir.path(), &["plan", "show"]));
    assert_eq!(listed["plans"].as_array().unwrap().len(), 2);
    let one = json(&rebuild(dir.path(), &["plan", "show", "c1-p2"]));
    assert_eq!(one["id"], "c1-p2");
}

#[test]
fn applying_twice_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&rebuild(dir.path(), &["generate", "--units", "12", "--seed", "1"])), 0);
    let out = rebuild(dir.path(), &["train", "--episodes", "100", "--agent", "qlearn"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));

    let first = rebuild(dir.path(), &["apply", "c1-p1"]);
    assert_eq!(code(&first), 0);
    assert_eq!(json(&first)["cycle"], 2);

    let second = rebuild(dir.path(), &["apply", "c1-p1"]);
    assert_eq!(code(&second), 1);
    assert_eq!(json(&second)["error"]["code"], "already_applied");

    let unknown = rebuild(dir.path(), &["apply", "c9-p9"]);
    assert_eq!(code(&unknown), 1);
    assert_eq!(json(&unknown)["error"]["code"], "unknown_plan");

    let history = json(&rebuild(dir.path(), &["cycles"]));
    assert_eq!(history.as_array().unwrap().len(), 2);
    assert_eq!(history[0]["selected"], "c1-p1");
}

#[test]
fn bad_input_reports_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(
        &bad,
        "[units]\nid,kind,vulnerability,cost,time,direct_benefit\nh1,Hospitals,0,100,2,50\ns1,Spaceport,0,100,2,50\n",
    )
    .unwrap();
    let out = rebuild(&dir.path().join("data"), &["ingest", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let err = &json(&out)["error"];
    assert_eq!(err["code"], "invalid_dataset");
    assert_eq!(err["details"]["table"], "units");
    assert_eq!(err["details"]["row"], 4);
    assert!(!dir.path().join("data/manifest.json").exists());
}

#[test]
fn ingest_refuses_to_clobber_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("city.dataset");
    let data = dir.path().join("data");
    assert_eq!(code(&rebuild(&data, &["generate", "--units", "6", "--out", file.to_str().unwrap()])), 0);
    assert_eq!(code(&rebuild(&data, &["ingest", file.to_str().unwrap()])), 0);
    let again = rebuild(&data, &["ingest", file.to_str().unwrap()]);
    assert_eq!(code(&again), 1);
    assert_eq!(json(&again)["error"]["code"], "lineage_exists");
    assert_eq!(code(&rebuild(&data, &["ingest", "--force", file.to_str().unwrap()])), 0);
}

#[test]
fn impossible_budget_exits_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&rebuild(dir.path(), &["generate", "--units", "10", "--seed", "2"])), 0);
    let out = rebuild(dir.path(), &["train", "--budget", "1", "--episodes", "20"]);
    assert_eq!(code(&out), 2);
    let err = &json(&out)["error"];
    assert_eq!(err["code"], "no_feasible_plan");
    assert!(err["details"]["binding"]
        .as_array()
        .unwrap()
        .iter()
        .any(|b| b == "budget"));
}

#[test]
fn missing_lineage_and_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = rebuild(dir.path(), &["plan", "show"]);
    assert_eq!(code(&out), 1);
    assert_eq!(json(&out)["error"]["code"], "no_lineage");

    assert_eq!(code(&rebuild(dir.path(), &["generate", "--units", "8"])), 0);
    let out = rebuild(dir.path(), &["train", "--horizon=-5", "--episodes", "10"]);
    assert_eq!(code(&out), 1);
    assert_eq!(json(&out)["error"]["code"], "invalid_request");

    let out = rebuild(dir.path(), &["train", "--agent", "ppo"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn data_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rebuild"))
        .env("REBUILD_DATA_DIR", dir.path())
        .args(["generate", "--units", "5"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn bench_writes_its_report() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&rebuild(dir.path(), &["generate", "--units", "8", "--seed", "4"])), 0);
    let out_dir = dir.path().join("report");
    let out = rebuild(
        dir.path(),
        &[
            "bench",
            "--episodes",
            "100",
            "--seeds",
            "0,1",
            "--agents",
            "random,qlearn",
            "--out",
            out_dir.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(json(&out)["summary"].as_array().unwrap().len(), 2);
    assert!(out_dir.join("summary.csv").exists());
    assert!(out_dir.join("curve-qlearn-1.csv").exists());
}
