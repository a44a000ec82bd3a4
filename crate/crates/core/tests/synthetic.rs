use std::path::Path;

use dynhin_core::graph::parse_snapshots;
use dynhin_core::synth::{SyntheticSpec, INFORMATIVE_VIEW, NOISE_VIEW};
use dynhin_core::views::build_views;
use dynhin_core::Schema;

fn within_and_across(spec: &SyntheticSpec, view: &str) -> Vec<(f64, f64)> {
    let data = spec.generate().unwrap();
    let schema = Schema::parse(&data.schema, Path::new("s")).unwrap();
    let series = parse_snapshots(&schema, &data.edges, Path::new("e")).unwrap();
    let views = build_views(&series, &[view]).unwrap();
    let u = series.universe();
    // Community by node index, from the `u{k}` ids (k mod c).
    let comm: Vec<usize> = (0..u.count(0))
        .map(|i| u.id(0, i)[1..].parse::<usize>().unwrap() % spec.communities)
        .collect();
    views[0]
        .steps()
        .iter()
        .map(|p| {
            let d = p.to_dense();
            let (mut win, mut nw, mut cross, mut nc) = (0.0, 0usize, 0.0, 0usize);
            for i in 0..d.nrows() {
                for j in 0..d.ncols() {
                    if i == j {
                        continue;
                    }
                    if comm[i] == comm[j] {
                        win += d[[i, j]];
                        nw += 1;
                    } else {
                        cross += d[[i, j]];
                        nc += 1;
                    }
                }
            }
            (win / nw as f64, cross / nc as f64)
        })
        .collect()
}

#[test]
fn informative_view_separates_communities_at_every_step() {
    for seed in 1..=3 {
        let spec = SyntheticSpec {
            communities: 2,
            seed,
            ..SyntheticSpec::default()
        };
        let steps = within_and_across(&spec, INFORMATIVE_VIEW);
        assert_eq!(steps.len(), spec.snapshots);
        for (t, (w, c)) in steps.iter().enumerate() {
            assert!(w > c, "seed {seed} t={}: within {w} <= across {c}", t + 1);
        }
        // The noise view carries no community signal.
        for (w, c) in within_and_across(&spec, NOISE_VIEW) {
            assert!((w - c).abs() < 0.25 * w.max(c), "noise view within {w} across {c}");
        }
    }
}

#[test]
fn membership_drift_keeps_labels_consistent() {
    let spec = SyntheticSpec {
        membership_drift: 0.3,
        ..SyntheticSpec::default()
    };
    let data = spec.generate().unwrap();
    let moved = data
        .user_community
        .iter()
        .enumerate()
        .filter(|(u, &c)| c != u % spec.communities)
        .count();
    assert!(moved > 0);
    for (line, &c) in data.labels.lines().zip(&data.user_community) {
        assert!(line.ends_with(&format!("\tc{c}")));
    }
}
