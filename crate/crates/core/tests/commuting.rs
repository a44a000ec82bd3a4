use std::fmt::Write as _;
use std::path::Path;

use dynhin_core::graph::{parse_snapshots, spmm};
use dynhin_core::views::{build_views, commuting_matrix, multiply_chain, parse_metapath, ChainOrder};
use dynhin_core::{Schema, SparseMatrix};
use proptest::prelude::*;

fn sparse(rows: usize, cols: usize, cells: &[(usize, usize, u8)]) -> SparseMatrix {
    SparseMatrix::from_triplets(
        rows,
        cols,
        cells.iter().map(|&(r, c, v)| (r % rows, c % cols, f64::from(v))),
    )
    .unwrap()
}

fn chain_strategy() -> impl Strategy<Value = Vec<SparseMatrix>> {
    (prop::collection::vec(1usize..12, 3..6), prop::collection::vec((0usize..64, 0usize..64, 1u8..4), 0..200)).prop_map(
        |(dims, cells)| {
            let per = cells.len() / (dims.len() - 1) + 1;
            dims.windows(2)
                .enumerate()
                .map(|(i, w)| {
                    let chunk = cells.iter().skip(i * per).take(per).copied().collect::<Vec<_>>();
                    sparse(w[0], w[1], &chunk)
                })
                .collect()
        },
    )
}

const SCHEMA: &str = "node U\nnode M\nnode G\nedge watch U M\nedge genre M G\n";

fn edge_text(edges: &[(usize, usize, bool)], order: &[usize]) -> String {
    let mut s = String::from("1\n");
    for &k in order {
        let (a, b, is_genre) = edges[k];
        if is_genre {
            writeln!(s, "1\tgenre\tm{a}\tg{b}").unwrap();
        } else {
            writeln!(s, "1\twatch\tu{a}\tm{b}").unwrap();
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chain_order_does_not_change_the_product(mats in chain_strategy()) {
        let refs: Vec<&SparseMatrix> = mats.iter().collect();
        let planned = multiply_chain(&refs, ChainOrder::Planned).unwrap();
        let left = multiply_chain(&refs, ChainOrder::LeftToRight).unwrap();
        let mut right = mats.last().unwrap().clone();
        for m in mats.iter().rev().skip(1) {
            right = spmm(m, &right).unwrap();
        }
        prop_assert_eq!(planned.to_dense(), left.to_dense());
        prop_assert_eq!(left.to_dense(), right.to_dense());
    }

    #[test]
    fn relabelling_nodes_permutes_the_commuting_matrix(
        edges in prop::collection::vec((0usize..8, 0usize..8, any::<bool>()), 1..60),
        seed in any::<u64>(),
    ) {
        // Reordering the file changes the order ids are interned in.
        let schema = Schema::parse(SCHEMA, Path::new("s")).unwrap();
        let forward: Vec<usize> = (0..edges.len()).collect();
        let mut shuffled = forward.clone();
        let mut x = seed | 1;
        for i in (1..shuffled.len()).rev() {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            shuffled.swap(i, (x % (i as u64 + 1)) as usize);
        }
        let a = parse_snapshots(&schema, &edge_text(&edges, &forward), Path::new("a")).unwrap();
        let b = parse_snapshots(&schema, &edge_text(&edges, &shuffled), Path::new("b")).unwrap();
        for spec in ["U-M-U", "U-M-G-M-U", "M-G-M", "U-M-G"] {
            let path = parse_metapath(spec, &schema).unwrap();
            let ma = commuting_matrix(&a, &path, 1).unwrap();
            let mb = commuting_matrix(&b, &path, 1).unwrap();
            let (s, e) = (path.anchor_type(), path.end_type());
            let ua = a.universe();
            let ub = b.universe();
            prop_assert_eq!(ma.nnz(), mb.nnz());
            for (i, j, v) in ma.iter() {
                let bi = ub.lookup(s, ua.id(s, i)).unwrap();
                let bj = ub.lookup(e, ua.id(e, j)).unwrap();
                prop_assert_eq!(mb.get(bi, bj), v);
            }
        }
    }

    #[test]
    fn palindromic_views_are_symmetric_with_unit_diagonal(
        edges in prop::collection::vec((0usize..10, 0usize..10, any::<bool>()), 1..80),
    ) {
        let schema = Schema::parse(SCHEMA, Path::new("s")).unwrap();
        let order: Vec<usize> = (0..edges.len()).collect();
        let s = parse_snapshots(&schema, &edge_text(&edges, &order), Path::new("e")).unwrap();
        let views = build_views(&s, &["U-M-U", "U-M-G-M-U", "M-G-M", "M-U-M"]).unwrap();
        for v in &views {
            let d = v.last().to_dense();
            prop_assert_eq!(d.clone(), d.t().to_owned());
            for i in 0..d.nrows() {
                prop_assert!(d[[i, i]] == 0.0 || d[[i, i]] == 1.0);
                for j in 0..d.ncols() {
                    prop_assert!((0.0..=1.0).contains(&d[[i, j]]));
                }
            }
        }
    }
}

#[test]
fn toy_bipartite_product() {
    let w = SparseMatrix::from_dense(&ndarray::array![[1.0, 1.0], [0.0, 1.0]]).unwrap();
    let m = spmm(&w, &w.transpose()).unwrap();
    assert_eq!(m.to_dense(), ndarray::array![[2.0, 1.0], [1.0, 1.0]]);
    let a = SparseMatrix::from_dense(&ndarray::array![[1.0, 1.0], [0.0, 1.0]]).unwrap();
    let b = SparseMatrix::from_dense(&ndarray::array![[1.0, 0.0], [1.0, 1.0]]).unwrap();
    assert_eq!(spmm(&a, &b).unwrap().to_dense(), ndarray::array![[2.0, 1.0], [1.0, 1.0]]);
}
