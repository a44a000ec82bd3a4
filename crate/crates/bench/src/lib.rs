//! Shared fixtures for the criterion benches.

use std::path::Path;

use dynhin_core::graph::parse_snapshots;
use dynhin_core::nn::seeded_rng;
use dynhin_core::synth::SyntheticSpec;
use dynhin_core::views::build_views;
use dynhin_core::{Schema, SnapshotSeries, SparseMatrix, ViewSeries};
use rand::Rng;

/// Random non-negative matrix with about `per_row` entries in each row.
pub fn random_sparse(rows: usize, cols: usize, per_row: usize, seed: u64) -> SparseMatrix {
    let mut rng = seeded_rng(seed);
    let triplets: Vec<_> = (0..rows)
        .flat_map(|r| (0..per_row).map(move |_| r))
        .map(|r| (r, rng.random_range(0..cols), 1.0))
        .collect();
    SparseMatrix::from_triplets(rows, cols, triplets).expect("in-range triplets")
}

/// Planted-community graph with `users` users and as many items.
pub fn synthetic_series(users: usize, snapshots: usize) -> SnapshotSeries {
    let spec = SyntheticSpec {
        users,
        items: users,
        noise_nodes: users / 2,
        snapshots,
        ..SyntheticSpec::default()
    };
    let data = spec.generate().expect("valid spec");
    let schema = Schema::parse(&data.schema, Path::new("schema")).expect("generated schema parses");
    parse_snapshots(&schema, &data.edges, Path::new("edges")).expect("generated edges parse")
}

pub fn synthetic_views(users: usize, snapshots: usize, paths: &[&str]) -> Vec<ViewSeries> {
    build_views(&synthetic_series(users, snapshots), paths).expect("paths fit the schema")
}
