use std::process::{Command, Output};

fn poupinn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poupinn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn list_names_every_experiment() {
    let o = poupinn(&["list"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for n in poupinn::experiments::names() {
        assert!(text.contains(&n), "{n}");
    }
    let o = poupinn(&["list", "--json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 10);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&poupinn(&["run", "no-such-experiment"])), 2);
    assert_eq!(code(&poupinn(&["frobnicate"])), 2);
    assert_eq!(code(&poupinn(&["run", "pou-ex5", "--set", "epochz=3"])), 2);
    assert_eq!(code(&poupinn(&["run", "pou-ex5", "--set", "epochs"])), 2);
    assert_eq!(code(&poupinn(&["export", "--checkpoint", "x", "--kind", "bogus"])), 2);
    let o = poupinn(&["run", "nope"]);
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("pou-ex1"), "{err}");
}

#[test]
fn runtime_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let o = poupinn(&["eval", "--checkpoint", missing.to_str().unwrap(), "--experiment", "pou-ex5"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn run_eval_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = poupinn(&["run", "pou-ex5", "--set", "epochs=2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.json", "history.csv", "checkpoint.json", "metrics.json", "fields/K.csv", "fields/partition.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(!out.join("FAILED").exists());
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);

    let ck = out.join("checkpoint.json");
    let o = poupinn(&["eval", "--checkpoint", ck.to_str().unwrap(), "--experiment", "pou-ex5"]);
    assert_eq!(code(&o), 0);
    let m: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(m["epochs"], 2);

    let csv = dir.path().join("k.csv");
    let o = poupinn(&[
        "export",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--kind",
        "K",
        "--res",
        "5,4",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().next(), Some("x,y,value"));
    assert_eq!(text.lines().count(), 21);

    let rerun = dir.path().join("rerun");
    let o = poupinn(&[
        "run",
        "--config",
        out.join("config.json").to_str().unwrap(),
        "--out",
        rerun.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        std::fs::read(out.join("metrics.json")).unwrap(),
        std::fs::read(rerun.join("metrics.json")).unwrap()
    );
}

#[test]
fn chain_writes_links() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("chain");
    let o = poupinn(&["chain", "pou-ex5", "--links", "2", "--set", "epochs=1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("link-0/checkpoint.json").exists());
    assert!(out.join("link-1/checkpoint.json").exists());
    let s: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("chain.json")).unwrap()).unwrap();
    assert_eq!(s["links"][1]["warm_start_gap"], 0.0);
}

#[test]
fn check_passes() {
    let o = poupinn(&["check"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}
