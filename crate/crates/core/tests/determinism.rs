use std::path::Path;

use poupinn::experiments::{self, run_experiment, ExperimentSpec};
use poupinn::train::{train_loop, Checkpoint, CollocationSpec};

fn small(name: &str, epochs: u64) -> ExperimentSpec {
    let mut spec = experiments::lookup(name).unwrap();
    spec.train.epochs = epochs;
    spec.train.collocation = CollocationSpec {
        side: 8,
        boundary_per_edge: 8,
        ..CollocationSpec::default()
    };
    if spec.supervised_points > 0 {
        spec.supervised_points = 256;
    }
    spec
}

fn read(dir: &Path, file: &str) -> Vec<u8> {
    std::fs::read(dir.join(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

#[test]
fn identical_configs_give_identical_bytes() {
    for name in ["pou-ex5", "pinn-ex2", "poupinn-ex1"] {
        let spec = small(name, 3);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_experiment(&spec, a.path()).unwrap();
        run_experiment(&spec, b.path()).unwrap();
        for f in ["metrics.json", "checkpoint.json", "history.csv", "config.json"] {
            assert_eq!(read(a.path(), f), read(b.path(), f), "{name}: {f}");
        }
    }
}

fn split_resume(name: &str, total: u64) {
    let spec = small(name, total);
    let problem = spec.problem().unwrap();
    let full = train_loop(&problem, spec.init_models().unwrap(), &spec.train, None, &spec.case).unwrap();

    let mut half = spec.train.clone();
    half.epochs = total / 2;
    let first = train_loop(&problem, spec.init_models().unwrap(), &half, None, &spec.case).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    first.checkpoint.save(&path).unwrap();
    let ck = Checkpoint::load(&path).unwrap();
    half.epochs = total - total / 2;
    let second = train_loop(&problem, spec.init_models().unwrap(), &half, Some(&ck), &spec.case).unwrap();

    assert_eq!(full.models, second.models, "{name}: parameters");
    assert_eq!(full.checkpoint.adam, second.checkpoint.adam, "{name}: moments");
    assert_eq!(full.checkpoint.rng, second.checkpoint.rng, "{name}: rng");
    assert_eq!(full.checkpoint.epoch, second.checkpoint.epoch);
    let joined: Vec<_> = first.history.iter().chain(&second.history).cloned().collect();
    assert_eq!(full.history, joined, "{name}: history");
    assert_eq!(full.final_loss.total.to_bits(), second.final_loss.total.to_bits());
}

#[test]
fn resume_matches_uninterrupted_minibatch() {
    split_resume("pou-ex5", 6);
}

#[test]
fn resume_matches_uninterrupted_full_batch() {
    split_resume("poupinn-ex1", 6);
    split_resume("pinn-ex1", 6);
}

#[test]
fn save_load_save_is_byte_identical() {
    let spec = small("poupinn-ex2", 2);
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&spec, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("checkpoint.json")).unwrap();
    let ck = Checkpoint::from_json(&text).unwrap();
    assert_eq!(ck.to_json().unwrap(), text);
}
