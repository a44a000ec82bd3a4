#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;

use dynhin_core::graph::parse_snapshots;
use dynhin_core::nn::{seeded_rng, SeededRng};
use dynhin_core::synth::SyntheticSpec;
use dynhin_core::views::build_views;
use dynhin_core::{Hyperparams, RunConfig, Schema, SnapshotSeries, Supervision, TaskKind, ViewSeries};
use rand::Rng;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Six `A` nodes linked to `B` and `C` nodes over three snapshots.
pub fn six_node_series(seed: u64) -> SnapshotSeries {
    let mut rng: SeededRng = seeded_rng(seed);
    let schema = Schema::parse("node A\nnode B\nnode C\nedge ab A B\nedge ac A C\n", Path::new("s")).unwrap();
    let mut text = String::new();
    for t in 1..=3 {
        for a in 0..6 {
            for _ in 0..rng.random_range(1..=2) {
                writeln!(text, "{t}\tab\ta{a}\tb{}", rng.random_range(0..4)).unwrap();
            }
            writeln!(text, "{t}\tac\ta{a}\tc{}", rng.random_range(0..3)).unwrap();
        }
    }
    parse_snapshots(&schema, &text, Path::new("toy")).unwrap()
}

pub fn six_node_views(seed: u64) -> Vec<ViewSeries> {
    build_views(&six_node_series(seed), &["A-B-A", "A-C-A"]).unwrap()
}

pub fn six_node_supervision() -> Supervision {
    Supervision::Classification {
        labels: vec![Some(0), Some(1), Some(0), Some(1), None, Some(0)],
        val: vec![(4, 1)],
    }
}

pub fn small_hyper() -> Hyperparams {
    Hyperparams {
        dim: 4,
        history: 2,
        epochs: 3,
        batch_size: 4,
        ..Hyperparams::default()
    }
}

pub fn small_spec() -> SyntheticSpec {
    SyntheticSpec {
        users: 40,
        items: 30,
        noise_nodes: 12,
        snapshots: 3,
        items_per_user: 4,
        noise_per_user: 3,
        noise_per_item: 3,
        seed: 5,
        ..SyntheticSpec::default()
    }
}

/// Writes the small synthetic data set to `dir/data` and returns a config
/// for `task` rooted at `dir`.
pub fn synthetic_config(dir: &Path, task: TaskKind) -> RunConfig {
    small_spec().generate().unwrap().write_to(&dir.join("data")).unwrap();
    let (views, interaction, labels) = match task {
        TaskKind::Classification => (vec!["U-I-U", "U-N-U"], None, Some("data/labels.tsv".into())),
        TaskKind::Recommendation => (vec!["U-I-U", "U-N-U", "I-U-I", "I-N-I"], Some("ui".into()), None),
    };
    RunConfig {
        schema: "data/schema.txt".into(),
        edges: "data/edges.tsv".into(),
        labels,
        label_path: None,
        cache_dir: None,
        output_dir: "out".into(),
        task,
        views: views.into_iter().map(String::from).collect(),
        anchor: None,
        interaction,
        train_fractions: vec![0.5],
        repetitions: 2,
        hyper: Hyperparams {
            dim: 8,
            history: 2,
            epochs: 2,
            batch_size: 16,
            eval_negatives: 10,
            ..Hyperparams::default()
        },
        base_dir: dir.to_path_buf(),
    }
}
