//! Commuting matrices: products of per-hop adjacency along a meta-path.

use std::borrow::Cow;

use crate::error::Result;
use crate::graph::{spmm, SnapshotSeries, SparseMatrix};
use crate::views::metapath::MetaPath;

/// How a chain of matrices is parenthesized. The result is the same either
/// way; only the cost differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainOrder {
    LeftToRight,
    /// Cheapest parenthesization under a sparse cost estimate.
    Planned,
}

/// Per-hop matrices of `path` at 1-based snapshot `t`.
pub fn hop_matrices<'a>(
    series: &'a SnapshotSeries,
    path: &MetaPath,
    t: usize,
) -> Vec<Cow<'a, SparseMatrix>> {
    path.steps()
        .iter()
        .map(|s| {
            let m = series.adjacency(t, s.edge_type);
            if s.reversed {
                Cow::Owned(m.transpose())
            } else {
                Cow::Borrowed(m)
            }
        })
        .collect()
}

/// `M^t = W_{a1,a2} × … × W_{a(l-1),a(l)}`: entry `(i, j)` counts the path
/// instances from `i` to `j` along `path` in snapshot `t`.
pub fn commuting_matrix(series: &SnapshotSeries, path: &MetaPath, t: usize) -> Result<SparseMatrix> {
    commuting_matrix_with(series, path, t, ChainOrder::Planned)
}

pub fn commuting_matrix_with(
    series: &SnapshotSeries,
    path: &MetaPath,
    t: usize,
    order: ChainOrder,
) -> Result<SparseMatrix> {
    let mats = hop_matrices(series, path, t);
    let refs: Vec<&SparseMatrix> = mats.iter().map(|m| m.as_ref()).collect();
    multiply_chain(&refs, order)
}

pub fn multiply_chain(mats: &[&SparseMatrix], order: ChainOrder) -> Result<SparseMatrix> {
    assert!(!mats.is_empty(), "empty chain");
    if mats.len() == 1 {
        return Ok(mats[0].clone());
    }
    match order {
        ChainOrder::LeftToRight => {
            let mut acc = spmm(mats[0], mats[1])?;
            for m in &mats[2..] {
                acc = spmm(&acc, m)?;
            }
            Ok(acc)
        }
        ChainOrder::Planned => {
            let split = plan_chain(mats);
            eval_plan(mats, &split, 0, mats.len() - 1)
        }
    }
}

/// Interval DP over split points. Cost of a product is estimated as
/// `nnz(A) · nnz(B) / inner_dim` (expected scalar multiplications with
/// uniformly spread entries), and the result's nnz is estimated the same way,
/// capped at its dense size.
fn plan_chain(mats: &[&SparseMatrix]) -> Vec<Vec<usize>> {
    let n = mats.len();
    let mut cost = vec![vec![0f64; n]; n];
    let mut nnz = vec![vec![0f64; n]; n];
    let mut split = vec![vec![0usize; n]; n];
    for i in 0..n {
        nnz[i][i] = mats[i].nnz() as f64;
    }
    for len in 2..=n {
        for i in 0..=n - len {
            let j = i + len - 1;
            cost[i][j] = f64::INFINITY;
            for k in i..j {
                let inner = mats[k].n_cols().max(1) as f64;
                let mults = nnz[i][k] * nnz[k + 1][j] / inner;
                let c = cost[i][k] + cost[k + 1][j] + mults;
                // Strict comparison keeps the leftmost split on ties, which
                // degenerates to left-to-right when nothing is gained.
                if c < cost[i][j] {
                    cost[i][j] = c;
                    split[i][j] = k;
                    let dense = (mats[i].n_rows() * mats[j].n_cols()) as f64;
                    nnz[i][j] = mults.min(dense);
                }
            }
        }
    }
    split
}

fn eval_plan(mats: &[&SparseMatrix], split: &[Vec<usize>], i: usize, j: usize) -> Result<SparseMatrix> {
    if i == j {
        return Ok(mats[i].clone());
    }
    let k = split[i][j];
    let left = eval_plan(mats, split, i, k)?;
    let right = eval_plan(mats, split, k + 1, j)?;
    spmm(&left, &right)
}
