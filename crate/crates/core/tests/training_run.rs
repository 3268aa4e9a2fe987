use std::path::Path;

use qssl::classical_nn::RepresentationKind;
use qssl::data_io::{read_metrics, write_synthetic_cifar, Checkpoint};
use qssl::qnn::ExecutionMode;
use qssl::run::train::checkpoint_path;
use qssl::run::{cmd_eval, cmd_probe, cmd_train_ssl, RunConfig};
use qssl::Error;

fn small_config(data: &Path, out: &Path) -> RunConfig {
    let mut c = RunConfig::default();
    c.dataset = data.to_path_buf();
    c.out = out.to_path_buf();
    c.seed = 3;
    c.train_images = 16;
    c.train.batch_size = 4;
    c.train.batches = 4;
    c.checkpoint_every = 2;
    c.encoder.width = 3;
    c.encoder.qnn_layers = 1;
    c.encoder.projection_widths = vec![3, 3];
    c.probe.epochs = 5;
    c.eval_images = 10;
    c
}

fn dataset() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_cifar(dir.path(), 20, 9).unwrap();
    dir
}

#[test]
fn training_writes_config_metrics_and_checkpoints() {
    let data = dataset();
    let out = tempfile::tempdir().unwrap();
    let cfg = small_config(data.path(), out.path());
    let mut seen = Vec::new();
    let run = cmd_train_ssl(&cfg, None, &mut |r| seen.push(r.batch)).unwrap();
    assert_eq!(seen, vec![1, 2, 3, 4]);
    let batches: Vec<u64> = read_metrics(&run.metrics_path).unwrap().iter().map(|r| r.batch).collect();
    assert_eq!(batches, vec![1, 2, 3, 4]);
    assert!(run.records.iter().all(|r| r.loss.is_some() && r.mean_hs.is_some()));
    let names: Vec<u64> = [0, 2, 4].to_vec();
    for b in names {
        assert!(checkpoint_path(out.path(), b).exists(), "checkpoint {b}");
    }
    let dumped = RunConfig::load(&out.path().join("config.toml")).unwrap();
    assert_eq!(dumped, cfg);
}

#[test]
fn zero_batches_checkpoints_initialization() {
    let data = dataset();
    let out = tempfile::tempdir().unwrap();
    let mut cfg = small_config(data.path(), out.path());
    cfg.train.batches = 0;
    let run = cmd_train_ssl(&cfg, None, &mut |_| {}).unwrap();
    assert!(run.records.is_empty());
    assert_eq!(
        std::fs::read_to_string(&run.metrics_path).unwrap(),
        "batch\tloss\tmean_hs\tprobe_accuracy\n"
    );
    assert_eq!(run.final_checkpoint, checkpoint_path(out.path(), 0));
}

#[test]
fn identical_seeds_give_identical_metrics_in_both_modes() {
    let data = dataset();
    for mode in [ExecutionMode::Exact, ExecutionMode::Shots(20)] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut ca = small_config(data.path(), a.path());
        ca.encoder.mode = mode;
        let mut cb = ca.clone();
        cb.out = b.path().to_path_buf();
        let ra = cmd_train_ssl(&ca, None, &mut |_| {}).unwrap();
        let rb = cmd_train_ssl(&cb, None, &mut |_| {}).unwrap();
        assert_eq!(
            std::fs::read(ra.metrics_path).unwrap(),
            std::fs::read(rb.metrics_path).unwrap(),
            "{mode}"
        );
    }
}

#[test]
fn resume_matches_uninterrupted_run() {
    let data = dataset();
    let full = tempfile::tempdir().unwrap();
    let cfg = small_config(data.path(), full.path());
    let whole = cmd_train_ssl(&cfg, None, &mut |_| {}).unwrap();

    let part = tempfile::tempdir().unwrap();
    let mut first = small_config(data.path(), part.path());
    first.train.batches = 2;
    let head = cmd_train_ssl(&first, None, &mut |_| {}).unwrap();
    let mut second = first.clone();
    second.train.batches = 4;
    let resumed = cmd_train_ssl(&second, Some(&head.final_checkpoint), &mut |_| {}).unwrap();

    assert_eq!(
        std::fs::read(&whole.metrics_path).unwrap(),
        std::fs::read(&resumed.metrics_path).unwrap()
    );
    let a = Checkpoint::load(&whole.final_checkpoint).unwrap();
    let b = Checkpoint::load(&resumed.final_checkpoint).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
}

#[test]
fn resume_rejects_other_configurations() {
    let data = dataset();
    let out = tempfile::tempdir().unwrap();
    let cfg = small_config(data.path(), out.path());
    let run = cmd_train_ssl(&cfg, None, &mut |_| {}).unwrap();

    let mut wider = cfg.clone();
    wider.encoder.width = 4;
    wider.encoder.projection_widths = vec![4, 4];
    let err = cmd_train_ssl(&wider, Some(&run.final_checkpoint), &mut |_| {}).unwrap_err();
    assert!(matches!(err, Error::ConfigMismatch(_)), "{err}");

    let mut classical = cfg.clone();
    classical.encoder.representation = RepresentationKind::Classical;
    assert!(cmd_probe(&classical, &[run.final_checkpoint.clone()]).is_err());

    let mut other_seed = cfg.clone();
    other_seed.seed = 4;
    other_seed.train.batches = 6;
    assert!(cmd_train_ssl(&other_seed, Some(&run.final_checkpoint), &mut |_| {}).is_err());
}

#[test]
fn probe_and_eval() {
    let data = dataset();
    let out = tempfile::tempdir().unwrap();
    let cfg = small_config(data.path(), out.path());
    let run = cmd_train_ssl(&cfg, None, &mut |_| {}).unwrap();

    let first = cmd_probe(&cfg, &run.checkpoints).unwrap();
    let again = cmd_probe(&cfg, &run.checkpoints).unwrap();
    assert_eq!(first.len(), 3);
    for (a, b) in first.iter().zip(&again) {
        assert_eq!(a.test_accuracy, b.test_accuracy);
        assert_eq!(a.encoder_hash_before, a.encoder_hash_after);
        assert!(a.test_accuracy.is_finite());
    }
    let series = read_metrics(&out.path().join("probe.tsv")).unwrap();
    assert_eq!(series.iter().map(|r| r.batch).collect::<Vec<_>>(), vec![0, 2, 4]);
    assert!(series.iter().all(|r| r.loss.is_none() && r.probe_accuracy.is_some()));

    let last = first.last().unwrap();
    let ev = cmd_eval(&cfg, &run.final_checkpoint, &last.probe_path, 4, 1).unwrap();
    assert_eq!(ev.confusion.total(), 4);
    assert_eq!(ev.accuracy, ev.confusion.trace() as f64 / 4.0);
    let ev2 = cmd_eval(&cfg, &run.final_checkpoint, &last.probe_path, 4, 1).unwrap();
    assert_eq!(ev, ev2);
    assert!(out.path().join("confusion.tsv").exists());

    assert!(matches!(
        cmd_eval(&cfg, &run.final_checkpoint, &last.probe_path, 0, 1),
        Err(Error::InvalidArgument(_))
    ));
    assert!(cmd_eval(&cfg, &run.final_checkpoint, &last.probe_path, 1000, 1).is_err());
    assert!(matches!(
        cmd_probe(&cfg, &[out.path().join("nope.ckpt")]),
        Err(Error::Io { .. })
    ));
}
