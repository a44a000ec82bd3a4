mod common;

use common::{six_node_supervision, six_node_views, small_hyper};
use dynhin_core::trainer::{batch_gradients, train, trace_csv, Trainer};
use dynhin_core::{CellKind, FusionKind, Hyperparams, Model, ModelConfig};

fn model(hp: &Hyperparams, views: &[dynhin_core::ViewSeries]) -> Model {
    let config = ModelConfig {
        dim: hp.dim,
        cell: hp.cell,
        fusion: hp.fusion,
        n_classes: Some(2),
        seed: hp.seed,
    };
    Model::new(views, &[0], config).unwrap()
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let views = six_node_views(1);
    let sup = six_node_supervision();
    for cell in [CellKind::Gru, CellKind::Lstm] {
        let hp = Hyperparams {
            lr: 0.0,
            cell,
            batch_size: 6,
            ..small_hyper()
        };
        let mut m = model(&hp, &views);
        let init = m.store.clone();
        let report = train(&mut m, &views, &sup, &hp).unwrap();
        assert_eq!(report.last, init);
        assert_eq!(m.store, init);
        assert_eq!(report.trace.len(), 3);
        let first = report.trace[0].total;
        assert!(report.trace.iter().all(|e| (e.total - first).abs() <= 1e-12 * first.abs()));
    }
}

#[test]
fn same_seed_same_run() {
    let views = six_node_views(1);
    let sup = six_node_supervision();
    let hp = Hyperparams {
        fusion: FusionKind::Uniform,
        ..small_hyper()
    };
    let run = || {
        let mut m = model(&hp, &views);
        let r = train(&mut m, &views, &sup, &hp).unwrap();
        (trace_csv(&r.trace), r.last.to_bytes(), m.store.to_bytes())
    };
    assert_eq!(run(), run());
    let other = Hyperparams { seed: 2, ..hp.clone() };
    let mut m = model(&other, &views);
    let r = train(&mut m, &views, &sup, &other).unwrap();
    assert_ne!(trace_csv(&r.trace), run().0);
}

#[test]
fn sharded_gradients_match_single_shard() {
    let views = six_node_views(2);
    let hp = small_hyper();
    let m = model(&hp, &views);
    let batch = dynhin_core::trainer::Batch::Nodes {
        nodes: vec![5, 0, 3, 1, 4, 2],
        labels: vec![Some(0), Some(1), None, Some(1), Some(0), Some(1)],
    };
    let (l1, g1) = batch_gradients(&m, &views, &hp, &batch, 1).unwrap();
    for shards in [2, 3, 6] {
        let (ls, gs) = batch_gradients(&m, &views, &hp, &batch, shards).unwrap();
        assert!((ls.total - l1.total).abs() <= 1e-12 * l1.total.abs());
        for (a, b) in g1.iter().zip(&gs) {
            match (a, b) {
                (Some(a), Some(b)) => {
                    for (x, y) in a.iter().zip(b) {
                        assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{x} vs {y}");
                    }
                }
                (None, None) => {}
                _ => panic!("gradient presence differs across shard counts"),
            }
        }
    }
}

#[test]
fn resumed_run_matches_uninterrupted() {
    let views = six_node_views(4);
    let sup = six_node_supervision();
    let hp = Hyperparams {
        epochs: 4,
        ..small_hyper()
    };
    let mut full_model = model(&hp, &views);
    let mut full = Trainer::new(&mut full_model, &views, &sup, hp.clone()).unwrap();
    full.fit().unwrap();
    let full_params = full.params().clone();
    let full_trace = full.state.trace.clone();

    let mut first = model(&hp, &views);
    let mut t = Trainer::new(&mut first, &views, &sup, hp.clone()).unwrap();
    t.run_epoch().unwrap();
    t.run_epoch().unwrap();
    let state = t.state.clone();
    let params = t.params().clone();
    drop(t);

    let mut second = model(&hp, &views);
    second.store = params;
    let mut t = Trainer::resume(&mut second, &views, &sup, hp, state).unwrap();
    t.fit().unwrap();
    assert_eq!(t.params(), &full_params);
    assert_eq!(t.state.trace, full_trace);
}

#[test]
fn best_checkpoint_is_installed() {
    let views = six_node_views(5);
    let sup = six_node_supervision();
    let hp = Hyperparams {
        epochs: 5,
        ..small_hyper()
    };
    let mut m = model(&hp, &views);
    let init = m.store.clone();
    let r = train(&mut m, &views, &sup, &hp).unwrap();
    let best = &r.trace[r.best_epoch.max(1) - 1];
    assert!(r.trace.iter().all(|e| e.val_metric <= best.val_metric));
    if r.best_epoch == 0 {
        assert_eq!(m.store, init);
    }

    let zero = Hyperparams { epochs: 0, ..hp };
    let mut m = model(&zero, &views);
    let init = m.store.clone();
    let r = train(&mut m, &views, &sup, &zero).unwrap();
    assert!(r.trace.is_empty());
    assert_eq!(r.best_epoch, 0);
    assert_eq!(m.store, init);
}

#[test]
fn non_finite_parameters_abort_as_divergence() {
    let views = six_node_views(6);
    let sup = six_node_supervision();
    let hp = small_hyper();
    let mut m = model(&hp, &views);
    let id = m.store.find("g0.v0.dec.w").unwrap();
    m.store.get_mut(id)[[0, 0]] = f64::NAN;
    let err = train(&mut m, &views, &sup, &hp).unwrap_err();
    assert!(err.is_divergence(), "{err}");
}

#[test]
fn mismatched_task_layout_is_rejected() {
    let views = six_node_views(1);
    let hp = small_hyper();
    let config = ModelConfig {
        dim: 4,
        cell: CellKind::Gru,
        fusion: FusionKind::Attention,
        n_classes: None,
        seed: 1,
    };
    let mut m = Model::new(&views, &[0], config).unwrap();
    assert!(Trainer::new(&mut m, &views, &six_node_supervision(), hp).is_err());
}
