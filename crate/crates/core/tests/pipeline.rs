//! Small end-to-end runs through the library API.

use tda_core::experiment::{self, synthetic_experiment};
use tda_core::synth::{generate, SynthConfig};
use tda_core::{ArtifactKind, Execution, SweepSummary};

#[test]
fn small_sweep_writes_everything_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(&SynthConfig { n_per_class: 120, ..SynthConfig::default() }, Execution::default()).unwrap();
    ds.write(dir.path(), Execution::default()).unwrap();
    let mut cfg = synthetic_experiment(ArtifactKind::Frame, 0);
    cfg.train.epochs = 3;
    cfg.p_grid = vec![1.0, 0.0, 0.0];
    cfg.resolve_relative_to(dir.path());
    let summary = experiment::sweep(&cfg, Execution::default()).unwrap();
    assert_eq!(summary.rows.iter().map(|r| r.p).collect::<Vec<_>>(), vec![0.0, 1.0]);
    let out = dir.path().join("runs");
    for row in ["p0", "p1"] {
        for file in ["model.json", "train_log.jsonl", "cbi.json", "cbi.txt"] {
            assert!(out.join(row).join(file).is_file(), "{row}/{file}");
        }
    }
    let json = std::fs::read_to_string(out.join("summary.json")).unwrap();
    let text = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert_eq!(SweepSummary::from_json(&json).unwrap().render_text(), text);
}

#[test]
fn training_loss_falls_for_every_grid_value() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(&SynthConfig { n_per_class: 200, ..SynthConfig::default() }, Execution::default()).unwrap();
    ds.write(dir.path(), Execution::default()).unwrap();
    let mut cfg = synthetic_experiment(ArtifactKind::Frame, 3);
    cfg.train.epochs = 5;
    cfg.resolve_relative_to(dir.path());
    let data = experiment::prepare(&cfg, Execution::default()).unwrap();
    for p in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let (_, log) = experiment::train_one(&cfg, &data, p, Execution::default()).unwrap();
        assert!(log.epochs[4].mean_loss < log.epochs[0].mean_loss, "p={p}: {:?}", log.epochs);
    }
}
