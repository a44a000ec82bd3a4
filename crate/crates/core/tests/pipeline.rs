mod common;

use common::synthetic_config;
use dynhin_core::nn::ParamStore;
use dynhin_core::pipeline::{
    prepare, run_evaluate, run_sweep, run_train, EvalReport, SweepAxis, CHECKPOINT, LAST, LOSS_TRACE, METADATA,
    REPORT_CSV,
};
use dynhin_core::{Error, TaskKind};

#[test]
fn zero_epochs_checkpoint_is_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synthetic_config(dir.path(), TaskKind::Classification);
    cfg.hyper.epochs = 0;
    run_train(&cfg, false).unwrap();
    let prep = prepare(&cfg).unwrap();
    let init = prep.new_model(&cfg.hyper).unwrap().store;
    let out = cfg.output_dir();
    assert_eq!(ParamStore::load(&out.join(CHECKPOINT)).unwrap(), init);
    assert_eq!(ParamStore::load(&out.join(LAST)).unwrap(), init);
    let trace = std::fs::read_to_string(out.join(LOSS_TRACE)).unwrap();
    assert_eq!(trace.lines().count(), 1);
}

#[test]
fn metadata_records_seed_and_input_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_config(dir.path(), TaskKind::Classification);
    let summary = run_train(&cfg, false).unwrap();
    let meta = std::fs::read_to_string(summary.output_dir.join(METADATA)).unwrap();
    let hash = dynhin_core::pipeline::data_hash(&cfg).unwrap();
    assert!(meta.contains(&hash), "{meta}");
    assert!(meta.lines().any(|l| l == "seed=1"), "{meta}");
    let saved = std::fs::read_to_string(summary.output_dir.join("config.json")).unwrap();
    let back = dynhin_core::RunConfig::from_json(&saved, dir.path()).unwrap();
    assert_eq!(back.hyper, cfg.hyper);
}

#[test]
fn evaluating_twice_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_config(dir.path(), TaskKind::Recommendation);
    run_train(&cfg, false).unwrap();
    let a = run_evaluate(&cfg, None, true).unwrap();
    let csv_a = std::fs::read(cfg.output_dir().join(REPORT_CSV)).unwrap();
    let b = run_evaluate(&cfg, None, true).unwrap();
    let csv_b = std::fs::read(cfg.output_dir().join(REPORT_CSV)).unwrap();
    assert_eq!(a, b);
    assert_eq!(csv_a, csv_b);
    let EvalReport::Ranking(r) = a else { panic!("expected ranking") };
    assert_eq!(r.csv_header(), "HR@5,HR@10,HR@15,HR@20,NDCG@5,NDCG@10,NDCG@15,NDCG@20");
    for name in ["attention_U.tsv", "attention_I.tsv"] {
        let text = std::fs::read_to_string(cfg.output_dir().join(name)).unwrap();
        assert!(text.lines().count() > 1, "{name}");
    }
}

#[test]
fn classification_report_covers_each_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synthetic_config(dir.path(), TaskKind::Classification);
    cfg.train_fractions = vec![0.2, 0.8];
    run_train(&cfg, false).unwrap();
    let EvalReport::Classification(rows) = run_evaluate(&cfg, None, false).unwrap() else {
        panic!("expected classification")
    };
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!((0.0..=1.0).contains(&r.micro_f1) && (0.0..=1.0).contains(&r.macro_f1));
        assert_eq!(r.repetitions, 2);
        assert_eq!(r.classifier, dynhin_core::eval::CLASSIFIER_NAME);
    }
}

#[test]
fn checkpoint_with_other_dimension_is_rejected_with_both_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_config(dir.path(), TaskKind::Classification);
    run_train(&cfg, false).unwrap();
    let mut wider = cfg.clone();
    wider.hyper.dim = 12;
    let err = run_evaluate(&wider, Some(&cfg.output_dir().join(CHECKPOINT)), false).unwrap_err();
    assert!(matches!(err, Error::Shape { .. }), "{err}");
    let msg = err.to_string();
    assert!(msg.contains("12") && msg.contains('8'), "{msg}");
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synthetic_config(dir.path(), TaskKind::Recommendation);
    cfg.hyper.epochs = 4;
    cfg.output_dir = "full".into();
    run_train(&cfg, false).unwrap();

    let mut part = cfg.clone();
    part.output_dir = "parts".into();
    part.hyper.epochs = 2;
    run_train(&part, false).unwrap();
    part.hyper.epochs = 4;
    run_train(&part, true).unwrap();
    for f in [CHECKPOINT, LAST, LOSS_TRACE] {
        let a = std::fs::read(cfg.output_dir().join(f)).unwrap();
        let b = std::fs::read(part.output_dir().join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn sweep_writes_table_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synthetic_config(dir.path(), TaskKind::Classification);
    cfg.hyper.epochs = 1;
    cfg.train_fractions = vec![0.5];
    let values: Vec<String> = vec!["4".into(), "6".into()];
    let rows = run_sweep(&cfg, SweepAxis::Dimension, &values, true).unwrap();
    assert_eq!(rows.len(), 2);
    let out = cfg.output_dir();
    let csv = std::fs::read_to_string(out.join("sweep_dimension.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("axis,value,"));
    assert!(out.join("sweep_dimension.txt").is_file());
    let plots = std::fs::read_dir(out.join("plot")).unwrap().count();
    assert_eq!(plots, rows[0].metrics.len());

    let views = run_sweep(&cfg, SweepAxis::ViewCount, &["1".to_string()], false).unwrap();
    assert_eq!(views.len(), 1);
    assert!(run_sweep(&cfg, SweepAxis::History, &["9".to_string()], false).is_err());
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synthetic_config(dir.path(), TaskKind::Classification);
    cfg.edges = "data/nope.tsv".into();
    let err = run_train(&cfg, false).unwrap_err();
    assert!(matches!(err, Error::Data(_)), "{err}");
}
