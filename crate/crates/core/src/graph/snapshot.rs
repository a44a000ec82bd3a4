//! Snapshot sequences over a fixed node universe.
//!
//! Edge files are tab separated: `snapshot_index  edge_type  src_id  dst_id`,
//! with 1-based snapshot indices. A row holding only a snapshot index
//! declares that snapshot without adding edges, which is how a snapshot with
//! no links at all is expressed. Blank lines and `#` comments are skipped.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::graph::schema::Schema;
use crate::graph::sparse::SparseMatrix;

const CACHE_MAGIC: &[u8; 4] = b"DHSS";
const CACHE_VERSION: u32 = 1;

/// Per node type, the bijection between external ids and dense indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeUniverse {
    ids: Vec<Vec<String>>,
    index: Vec<HashMap<String, usize>>,
}

impl NodeUniverse {
    pub fn new(n_types: usize) -> Self {
        NodeUniverse {
            ids: vec![Vec::new(); n_types],
            index: vec![HashMap::new(); n_types],
        }
    }

    /// Dense index of `id`, assigning the next free one on first sight.
    pub fn intern(&mut self, node_type: usize, id: &str) -> usize {
        if let Some(&i) = self.index[node_type].get(id) {
            return i;
        }
        let i = self.ids[node_type].len();
        self.ids[node_type].push(id.to_string());
        self.index[node_type].insert(id.to_string(), i);
        i
    }

    pub fn lookup(&self, node_type: usize, id: &str) -> Option<usize> {
        self.index[node_type].get(id).copied()
    }

    pub fn id(&self, node_type: usize, index: usize) -> &str {
        &self.ids[node_type][index]
    }

    pub fn ids(&self, node_type: usize) -> &[String] {
        &self.ids[node_type]
    }

    pub fn count(&self, node_type: usize) -> usize {
        self.ids[node_type].len()
    }

    pub fn n_types(&self) -> usize {
        self.ids.len()
    }
}

/// The dynamic network: for every snapshot `t` and every edge type, an
/// adjacency matrix dimensioned by the endpoint types' universe sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSeries {
    schema: Schema,
    universe: NodeUniverse,
    /// `adjacency[t][edge_type]`, 0-based `t`.
    adjacency: Vec<Vec<SparseMatrix>>,
}

impl SnapshotSeries {
    pub fn new(
        schema: Schema,
        universe: NodeUniverse,
        adjacency: Vec<Vec<SparseMatrix>>,
    ) -> Result<Self> {
        if adjacency.is_empty() {
            return Err(Error::Data("no snapshots".into()));
        }
        for (t, mats) in adjacency.iter().enumerate() {
            if mats.len() != schema.edge_types().len() {
                return Err(Error::Data(format!(
                    "snapshot {} has {} matrices, schema declares {} edge types",
                    t + 1,
                    mats.len(),
                    schema.edge_types().len()
                )));
            }
            for (e, m) in schema.edge_types().iter().zip(mats) {
                let want = (universe.count(e.src), universe.count(e.dst));
                if m.shape() != want {
                    return Err(Error::shape(
                        "snapshot",
                        format!(
                            "edge type `{}` at t={} is {:?}, universe needs {:?}",
                            e.name,
                            t + 1,
                            m.shape(),
                            want
                        ),
                    ));
                }
            }
        }
        Ok(SnapshotSeries {
            schema,
            universe,
            adjacency,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn universe(&self) -> &NodeUniverse {
        &self.universe
    }

    /// Window size T.
    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Adjacency of `edge_type` at 1-based snapshot `t`.
    pub fn adjacency(&self, t: usize, edge_type: usize) -> &SparseMatrix {
        &self.adjacency[t - 1][edge_type]
    }

    /// Keeps only the last `window` snapshots.
    pub fn truncate_front(&self, window: usize) -> Result<SnapshotSeries> {
        if window == 0 || window > self.len() {
            return Err(Error::Invalid(format!(
                "window {window} outside 1..={}",
                self.len()
            )));
        }
        Ok(SnapshotSeries {
            schema: self.schema.clone(),
            universe: self.universe.clone(),
            adjacency: self.adjacency[self.len() - window..].to_vec(),
        })
    }

    /// Returns a copy with the given `(src, dst)` pairs of `edge_type`
    /// removed from every snapshot.
    pub fn without_edges(&self, edge_type: usize, pairs: &[(usize, usize)]) -> Result<SnapshotSeries> {
        let drop: std::collections::HashSet<(usize, usize)> = pairs.iter().copied().collect();
        let adjacency = self
            .adjacency
            .iter()
            .map(|mats| {
                let mut mats = mats.clone();
                let m = &mats[edge_type];
                let (r, c) = m.shape();
                mats[edge_type] = SparseMatrix::from_triplets(
                    r,
                    c,
                    m.iter().filter(|(i, j, _)| !drop.contains(&(*i, *j))),
                )?;
                Ok(mats)
            })
            .collect::<Result<Vec<_>>>()?;
        SnapshotSeries::new(self.schema.clone(), self.universe.clone(), adjacency)
    }

    /// Human-readable summary: node counts per type and stored entries per
    /// edge type per snapshot.
    pub fn stats(&self) -> String {
        let mut out = String::new();
        writeln!(out, "snapshots\t{}", self.len()).unwrap();
        for t in self.schema.node_types() {
            writeln!(out, "nodes\t{}\t{}", t.name, self.universe.count(t.id)).unwrap();
        }
        for e in self.schema.edge_types() {
            for t in 1..=self.len() {
                writeln!(
                    out,
                    "edges\t{}\t{}-{}\tt={}\t{}",
                    e.name,
                    self.schema.node_type_name(e.src),
                    self.schema.node_type_name(e.dst),
                    t,
                    self.adjacency(t, e.id).nnz()
                )
                .unwrap();
            }
        }
        out
    }

    pub fn to_cache_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(CACHE_MAGIC, CACHE_VERSION);
        w.len(self.schema.node_types().len());
        for t in self.schema.node_types() {
            w.str(&t.name);
        }
        w.len(self.schema.edge_types().len());
        for e in self.schema.edge_types() {
            w.str(&e.name);
            w.len(e.src);
            w.len(e.dst);
        }
        for ty in 0..self.universe.n_types() {
            w.len(self.universe.count(ty));
            for id in self.universe.ids(ty) {
                w.str(id);
            }
        }
        w.len(self.len());
        for mats in &self.adjacency {
            for m in mats {
                w.len(m.n_rows());
                w.len(m.n_cols());
                w.usizes(m.indptr());
                w.usizes(m.indices());
                w.f64s(m.values());
            }
        }
        w.finish()
    }

    pub fn from_cache_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = Reader::open(bytes, origin, CACHE_MAGIC, CACHE_VERSION)?;
        let n_nodes = r.len()?;
        let nodes = (0..n_nodes).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let n_edges = r.len()?;
        let mut edges = Vec::with_capacity(n_edges);
        for _ in 0..n_edges {
            let name = r.str()?;
            let (s, d) = (r.len()?, r.len()?);
            if s >= n_nodes || d >= n_nodes {
                return Err(r.bad("edge endpoint out of range"));
            }
            edges.push((name, nodes[s].clone(), nodes[d].clone()));
        }
        let schema = Schema::new(&nodes, edges)?;
        let mut universe = NodeUniverse::new(n_nodes);
        for ty in 0..n_nodes {
            let n = r.len()?;
            for _ in 0..n {
                let id = r.str()?;
                universe.intern(ty, &id);
            }
        }
        let t_count = r.len()?;
        let mut adjacency = Vec::with_capacity(t_count);
        for _ in 0..t_count {
            let mut mats = Vec::with_capacity(n_edges);
            for _ in 0..n_edges {
                let (rows, cols) = (r.len()?, r.len()?);
                let m = SparseMatrix::from_csr(rows, cols, r.usizes()?, r.usizes()?, r.f64s()?)?;
                mats.push(m);
            }
            adjacency.push(mats);
        }
        r.expect_end()?;
        SnapshotSeries::new(schema, universe, adjacency)
    }
}

/// Parses an edge file against `schema`. Identical input always yields an
/// identical series: ids are numbered in order of first appearance.
pub fn parse_snapshots(schema: &Schema, text: &str, origin: &Path) -> Result<SnapshotSeries> {
    let mut universe = NodeUniverse::new(schema.node_types().len());
    // snapshot -> edge type -> (src, dst) -> count
    let mut counts: BTreeMap<usize, Vec<BTreeMap<(usize, usize), f64>>> = BTreeMap::new();
    let n_edge_types = schema.edge_types().len();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: line_no,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let t: usize = fields[0]
            .parse()
            .map_err(|_| err(format!("malformed row: bad snapshot index `{}`", fields[0])))?;
        if t == 0 {
            return Err(err("malformed row: snapshot indices are 1-based".into()));
        }
        let slot = counts
            .entry(t)
            .or_insert_with(|| vec![BTreeMap::new(); n_edge_types]);
        match fields.as_slice() {
            [_] => {}
            [_, ty, src, dst] => {
                let e = schema
                    .edge_type_id(ty)
                    .ok_or_else(|| err(format!("unknown edge type `{ty}`")))?;
                if src.is_empty() || dst.is_empty() {
                    return Err(err("malformed row: empty node id".into()));
                }
                let et = &schema.edge_types()[e];
                let s = universe.intern(et.src, src);
                let d = universe.intern(et.dst, dst);
                *slot[e].entry((s, d)).or_insert(0.0) += 1.0;
            }
            _ => {
                return Err(err(format!(
                    "malformed row: expected 4 tab-separated columns, found {}",
                    fields.len()
                )))
            }
        }
    }

    let Some((&max_t, _)) = counts.last_key_value() else {
        return Err(Error::Data(format!("{}: no snapshots", origin.display())));
    };
    if let Some(missing) = (1..=max_t).find(|t| !counts.contains_key(t)) {
        return Err(Error::Data(format!(
            "{}: snapshot index gap: {missing} missing from 1..={max_t}",
            origin.display()
        )));
    }

    let adjacency = counts
        .into_values()
        .map(|per_type| {
            per_type
                .into_iter()
                .zip(schema.edge_types())
                .map(|(pairs, et)| {
                    SparseMatrix::from_triplets(
                        universe.count(et.src),
                        universe.count(et.dst),
                        pairs.into_iter().map(|((s, d), c)| (s, d, c)),
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    SnapshotSeries::new(schema.clone(), universe, adjacency)
}

pub fn load_snapshots(schema: &Schema, edges_path: impl AsRef<Path>) -> Result<SnapshotSeries> {
    let path = edges_path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_snapshots(schema, &text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::new(
            ["U", "M"],
            [("rates".to_string(), "U".to_string(), "M".to_string())],
        )
        .unwrap()
    }

    fn parse(text: &str) -> Result<SnapshotSeries> {
        parse_snapshots(&schema(), text, Path::new("edges.tsv"))
    }

    #[test]
    fn duplicate_edges_collapse_to_counts() {
        let s = parse("1\trates\tu1\tm1\n1\trates\tu1\tm1\n1\trates\tu2\tm1\n").unwrap();
        let a = s.adjacency(1, 0);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 0), 2.0);
    }

    #[test]
    fn empty_middle_snapshot_keeps_dimensions() {
        let s = parse("1\trates\tu1\tm1\n2\n3\trates\tu2\tm2\n").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.adjacency(2, 0).nnz(), 0);
        for t in 1..=3 {
            assert_eq!(s.adjacency(t, 0).shape(), (2, 2));
        }
    }

    #[test]
    fn gap_is_rejected() {
        let err = parse("1\trates\tu1\tm1\n3\trates\tu1\tm1\n").unwrap_err();
        assert!(err.to_string().contains("gap"), "{err}");
    }

    #[test]
    fn unknown_edge_type() {
        let err = parse("1\tlikes\tu1\tm1\n").unwrap_err();
        assert!(err.to_string().contains("edges.tsv:1") && err.to_string().contains("likes"));
    }

    #[test]
    fn malformed_rows() {
        assert!(parse("1\trates\tu1\n").is_err());
        assert!(parse("x\trates\tu1\tm1\n").is_err());
        assert!(parse("0\trates\tu1\tm1\n").is_err());
    }

    #[test]
    fn empty_file() {
        let err = parse("# header only\n").unwrap_err();
        assert!(err.to_string().contains("no snapshots"));
    }

    #[test]
    fn cache_round_trip_is_identical() {
        let s = parse("1\trates\tu1\tm1\n2\trates\tu2\tm1\n2\trates\tu1\tm2\n").unwrap();
        let bytes = s.to_cache_bytes();
        let back = SnapshotSeries::from_cache_bytes(&bytes, Path::new("c")).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_cache_bytes(), bytes);
    }

    #[test]
    fn corrupt_cache_rejected() {
        let s = parse("1\trates\tu1\tm1\n").unwrap();
        let mut bytes = s.to_cache_bytes();
        bytes.truncate(bytes.len() - 3);
        assert!(SnapshotSeries::from_cache_bytes(&bytes, Path::new("c")).is_err());
        assert!(SnapshotSeries::from_cache_bytes(b"XXXX\x01\0\0\0", Path::new("c")).is_err());
    }

    #[test]
    fn truncate_and_remove() {
        let s = parse("1\trates\tu1\tm1\n2\trates\tu2\tm1\n2\trates\tu1\tm1\n").unwrap();
        let last = s.truncate_front(1).unwrap();
        assert_eq!(last.len(), 1);
        assert_eq!(last.adjacency(1, 0).nnz(), 2);
        let pruned = s.without_edges(0, &[(0, 0)]).unwrap();
        assert_eq!(pruned.adjacency(1, 0).nnz(), 0);
        assert_eq!(pruned.adjacency(2, 0).nnz(), 1);
        assert!(s.truncate_front(0).is_err());
    }
}
