//! Supervision: node labels, validation splits and the leave-one-out
//! interaction split.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{NodeUniverse, SnapshotSeries};
use crate::objectives::sample_negatives;
use crate::views::{commuting_matrix, MetaPath};

/// Class labels for a subset of one node type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub node_type: usize,
    pub nodes: Vec<usize>,
    pub classes: Vec<usize>,
    pub class_names: Vec<String>,
}

impl LabelSet {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn subset(&self, positions: &[usize]) -> LabelSet {
        LabelSet {
            node_type: self.node_type,
            nodes: positions.iter().map(|&p| self.nodes[p]).collect(),
            classes: positions.iter().map(|&p| self.classes[p]).collect(),
            class_names: self.class_names.clone(),
        }
    }
}

/// Parses `node_id <TAB> class` lines. Class ids follow first appearance;
/// a node may be labeled once.
pub fn parse_labels(text: &str, origin: &Path, universe: &NodeUniverse, node_type: usize) -> Result<LabelSet> {
    let mut names: Vec<String> = Vec::new();
    let mut nodes = Vec::new();
    let mut classes = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let mut parts = line.split('\t');
        let (Some(node), Some(class), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err("expected `node<TAB>class`".into()));
        };
        let idx = universe
            .lookup(node_type, node)
            .ok_or_else(|| err(format!("unknown node `{node}`")))?;
        if !seen.insert(idx) {
            return Err(err(format!("node `{node}` labeled twice")));
        }
        let c = match names.iter().position(|n| n == class) {
            Some(c) => c,
            None => {
                names.push(class.to_string());
                names.len() - 1
            }
        };
        nodes.push(idx);
        classes.push(c);
    }
    if nodes.is_empty() {
        return Err(Error::Data(format!("{}: no labels", origin.display())));
    }
    Ok(LabelSet {
        node_type,
        nodes,
        classes,
        class_names: names,
    })
}

pub fn load_labels(path: &Path, universe: &NodeUniverse, node_type: usize) -> Result<LabelSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, path, universe, node_type)
}

/// Labels each anchor node of `path` with the end node it reaches through
/// the most path instances, summed over all snapshots (ties go to the
/// lowest index). Nodes reaching nothing stay unlabeled.
pub fn majority_labels(series: &SnapshotSeries, path: &MetaPath) -> Result<LabelSet> {
    let mut total: Option<crate::graph::SparseMatrix> = None;
    for t in 1..=series.len() {
        let m = commuting_matrix(series, path, t)?;
        total = Some(match total {
            None => m,
            Some(acc) => {
                let (r, c) = acc.shape();
                crate::graph::SparseMatrix::from_triplets(r, c, acc.iter().chain(m.iter()))?
            }
        });
    }
    let total = total.ok_or_else(|| Error::Data("no snapshots".into()))?;
    let end = path.end_type();
    let mut classes_of_end: BTreeMap<usize, usize> = BTreeMap::new();
    let mut picks = Vec::new();
    for i in 0..total.n_rows() {
        let (cols, vals) = total.row(i);
        let best = cols
            .iter()
            .zip(vals)
            .fold(None::<(usize, f64)>, |best, (&c, &v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((c, v)),
            });
        if let Some((c, _)) = best {
            picks.push((i, c));
            classes_of_end.entry(c).or_insert(0);
        }
    }
    for (k, v) in classes_of_end.values_mut().enumerate() {
        *v = k;
    }
    let class_names = classes_of_end
        .keys()
        .map(|&c| series.universe().id(end, c).to_string())
        .collect();
    Ok(LabelSet {
        node_type: path.anchor_type(),
        nodes: picks.iter().map(|p| p.0).collect(),
        classes: picks.iter().map(|p| classes_of_end[&p.1]).collect(),
        class_names,
    })
}

/// Splits label positions per class, sending `fraction` of each class
/// (rounded, leaving at least one member behind) to the second part.
pub fn stratified_split<R: Rng + ?Sized>(labels: &LabelSet, fraction: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); labels.n_classes()];
    for (p, &c) in labels.classes.iter().enumerate() {
        by_class[c].push(p);
    }
    let (mut keep, mut held) = (Vec::new(), Vec::new());
    for mut members in by_class {
        members.shuffle(rng);
        let n = members.len();
        let k = ((fraction * n as f64).round() as usize).min(n.saturating_sub(1));
        held.extend_from_slice(&members[..k]);
        keep.extend_from_slice(&members[k..]);
    }
    keep.sort_unstable();
    held.sort_unstable();
    (keep, held)
}

/// Leave-one-out interaction split between the two endpoint types of one
/// edge type.
#[derive(Debug, Clone)]
pub struct RecSplit {
    pub edge_type: usize,
    pub user_type: usize,
    pub item_type: usize,
    pub n_users: usize,
    pub n_items: usize,
    /// Series with every held-out pair removed from all snapshots.
    pub train: SnapshotSeries,
    /// Held-out test item per user.
    pub test: Vec<Option<usize>>,
    /// Held-out validation item per user.
    pub val: Vec<Option<usize>>,
    /// Every item a user ever interacted with, sorted.
    pub known: Vec<Vec<usize>>,
}

impl RecSplit {
    /// Users ordered by index paired with their test item.
    pub fn test_pairs(&self) -> Vec<(usize, usize)> {
        held_pairs(&self.test)
    }

    pub fn val_pairs(&self) -> Vec<(usize, usize)> {
        held_pairs(&self.val)
    }
}

fn held_pairs(held: &[Option<usize>]) -> Vec<(usize, usize)> {
    held.iter()
        .enumerate()
        .filter_map(|(u, i)| i.map(|i| (u, i)))
        .collect()
}

/// Orders each user's interactions by the snapshot they first appear in,
/// then by item index. The last one is the test item and the one before it
/// the validation item; users need three interactions to give up both and
/// two to give up a test item.
pub fn leave_one_out(series: &SnapshotSeries, edge_type: usize) -> Result<RecSplit> {
    let et = series
        .schema()
        .edge_types()
        .get(edge_type)
        .ok_or_else(|| Error::Invalid(format!("edge type {edge_type} out of range")))?
        .clone();
    let n_users = series.universe().count(et.src);
    let n_items = series.universe().count(et.dst);
    let mut first: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); n_users];
    for t in 1..=series.len() {
        for (u, i, _) in series.adjacency(t, edge_type).iter() {
            first[u].entry(i).or_insert(t);
        }
    }
    let mut test = vec![None; n_users];
    let mut val = vec![None; n_users];
    let mut known = Vec::with_capacity(n_users);
    let mut removed = Vec::new();
    for (u, items) in first.iter().enumerate() {
        let mut order: Vec<(usize, usize)> = items.iter().map(|(&i, &t)| (t, i)).collect();
        order.sort_unstable();
        if order.len() >= 2 {
            let last = order[order.len() - 1].1;
            test[u] = Some(last);
            removed.push((u, last));
        }
        if order.len() >= 3 {
            let prev = order[order.len() - 2].1;
            val[u] = Some(prev);
            removed.push((u, prev));
        }
        known.push(items.keys().copied().collect());
    }
    let train = series.without_edges(edge_type, &removed)?;
    Ok(RecSplit {
        edge_type,
        user_type: et.src,
        item_type: et.dst,
        n_users,
        n_items,
        train,
        test,
        val,
        known,
    })
}

/// Per-user positive items present in any snapshot of `series`.
pub fn interactions(series: &SnapshotSeries, edge_type: usize, n_users: usize) -> Vec<Vec<usize>> {
    let mut pos: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); n_users];
    for t in 1..=series.len() {
        for (u, i, _) in series.adjacency(t, edge_type).iter() {
            pos[u].insert(i);
        }
    }
    pos.into_iter().map(|s| s.into_iter().collect()).collect()
}

/// The shared evaluation negatives: for every user with a test item, `n`
/// items the user never interacted with. Users are drawn in index order
/// from one generator, so the lists depend only on the split and `seed`.
pub fn eval_negatives(split: &RecSplit, n: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut rng = crate::nn::seeded_rng(seed);
    split
        .test
        .iter()
        .enumerate()
        .map(|(u, t)| match t {
            Some(_) => sample_negatives(&mut rng, split.n_items, &split.known[u], n)
                .map_err(|e| Error::Data(format!("user {}: {e}", split.train.universe().id(split.user_type, u)))),
            None => Ok(Vec::new()),
        })
        .collect()
}
