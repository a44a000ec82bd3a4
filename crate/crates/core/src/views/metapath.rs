use std::fmt;

use crate::error::{Error, Result};
use crate::graph::Schema;

/// Longest accepted meta-path, in node types (four relation steps).
pub const MAX_PATH_NODES: usize = 5;

/// One hop of a meta-path: an edge type, possibly walked against its
/// declared direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub edge_type: usize,
    pub reversed: bool,
}

/// A validated node-type sequence `a_1 - a_2 - ... - a_l` with its resolved
/// relation for every hop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaPath {
    spec: String,
    node_types: Vec<usize>,
    steps: Vec<Step>,
}

impl MetaPath {
    pub fn spec(&self) -> &str {
        &self.spec
    }

    pub fn node_types(&self) -> &[usize] {
        &self.node_types
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn anchor_type(&self) -> usize {
        self.node_types[0]
    }

    pub fn end_type(&self) -> usize {
        *self.node_types.last().unwrap()
    }

    pub fn is_palindromic(&self) -> bool {
        self.node_types.iter().eq(self.node_types.iter().rev())
    }

    /// Palindromic with an even number of hops, so the commuting matrix
    /// factors as `C · Cᵀ` and is symmetric.
    pub fn is_symmetric(&self) -> bool {
        self.is_palindromic() && self.steps.len().is_multiple_of(2)
    }
}

impl fmt::Display for MetaPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.spec)
    }
}

/// Parses a spec such as `U-M-G-M-U`.
///
/// Each hop uses the first declared edge type joining the two node types in
/// either direction. On a palindromic path the second half mirrors the first
/// with orientation flipped, so a hop between two nodes of the same type is
/// walked forward on the way out and backward on the way home.
pub fn parse_metapath(spec: &str, schema: &Schema) -> Result<MetaPath> {
    let fail = |msg: String| Error::MetaPath {
        spec: spec.to_string(),
        msg,
    };
    let names: Vec<&str> = spec.split('-').map(str::trim).collect();
    if names.len() < 2 {
        return Err(fail("needs at least two node types".into()));
    }
    if names.len() > MAX_PATH_NODES {
        return Err(fail(format!(
            "{} node types exceeds the cap of {MAX_PATH_NODES}",
            names.len()
        )));
    }
    let node_types = names
        .iter()
        .map(|n| {
            schema
                .node_type_id(n)
                .ok_or_else(|| fail(format!("unknown node type `{n}`")))
        })
        .collect::<Result<Vec<_>>>()?;

    let palindromic = node_types.iter().eq(node_types.iter().rev());
    let hops = node_types.len() - 1;
    let mut steps: Vec<Step> = Vec::with_capacity(hops);
    for i in 0..hops {
        let mirror = hops - 1 - i;
        if palindromic && mirror < i {
            let s = steps[mirror];
            steps.push(Step {
                edge_type: s.edge_type,
                reversed: !s.reversed,
            });
            continue;
        }
        let (a, b) = (node_types[i], node_types[i + 1]);
        let (edge_type, reversed) = schema.connecting_edge(a, b).ok_or_else(|| {
            fail(format!(
                "no edge type connects `{}` and `{}`",
                names[i],
                names[i + 1]
            ))
        })?;
        steps.push(Step {
            edge_type,
            reversed,
        });
    }
    Ok(MetaPath {
        spec: names.join("-"),
        node_types,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn movielens() -> Schema {
        let e = |n: &str, s: &str, d: &str| (n.to_string(), s.to_string(), d.to_string());
        Schema::new(
            ["U", "M", "A", "D", "T", "G"],
            [
                e("watch", "U", "M"),
                e("acts", "M", "A"),
                e("directs", "D", "M"),
                e("tagged", "M", "T"),
                e("genre", "M", "G"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn umgmu_is_palindromic() {
        let s = movielens();
        let p = parse_metapath("U-M-G-M-U", &s).unwrap();
        assert!(p.is_palindromic() && p.is_symmetric());
        assert_eq!(p.anchor_type(), 0);
        assert_eq!(p.steps().len(), 4);
        assert!(!p.steps()[0].reversed && p.steps()[3].reversed);
        assert_eq!(p.steps()[1].edge_type, p.steps()[2].edge_type);
    }

    #[test]
    fn reverse_edges_resolved() {
        let p = parse_metapath("M-D-M", &movielens()).unwrap();
        assert_eq!(
            p.steps(),
            &[
                Step { edge_type: 2, reversed: true },
                Step { edge_type: 2, reversed: false }
            ]
        );
    }

    #[test]
    fn errors() {
        let s = movielens();
        assert!(parse_metapath("U-U", &s).unwrap_err().to_string().contains("no edge type"));
        assert!(parse_metapath("U-X-U", &s).unwrap_err().to_string().contains("unknown"));
        assert!(parse_metapath("U-M-U-M-U-M", &s).unwrap_err().to_string().contains("cap"));
        assert!(parse_metapath("U", &s).is_err());
    }

    #[test]
    fn self_type_hop_mirrors() {
        let s = Schema::new(
            ["U", "M"],
            [
                ("follows".to_string(), "U".to_string(), "U".to_string()),
                ("watch".to_string(), "U".to_string(), "M".to_string()),
            ],
        )
        .unwrap();
        let p = parse_metapath("U-U-M-U-U", &s).unwrap();
        assert!(!p.steps()[0].reversed);
        assert!(p.steps()[3].reversed);
    }
}
