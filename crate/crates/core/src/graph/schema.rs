//! Network schema: declared node types and typed relations between them.
//!
//! The text format is line oriented:
//!
//! ```text
//! # DBLP
//! node A
//! node P
//! edge writes A P
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeType {
    pub id: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeType {
    pub id: usize,
    pub name: String,
    pub src: usize,
    pub dst: usize,
}

/// Immutable schema. Ids are declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    node_types: Vec<NodeType>,
    edge_types: Vec<EdgeType>,
}

impl Schema {
    /// Builds a schema from `(name)` node declarations and
    /// `(name, src_name, dst_name)` edge declarations.
    pub fn new<N, E>(nodes: N, edges: E) -> Result<Self>
    where
        N: IntoIterator,
        N::Item: AsRef<str>,
        E: IntoIterator<Item = (String, String, String)>,
    {
        let mut node_types = Vec::new();
        let mut by_name: HashMap<String, usize> = HashMap::new();
        for name in nodes {
            let name = name.as_ref().to_string();
            if by_name.contains_key(&name) {
                return Err(Error::Schema(format!("duplicate type name `{name}`")));
            }
            by_name.insert(name.clone(), node_types.len());
            node_types.push(NodeType {
                id: node_types.len(),
                name,
            });
        }
        if node_types.is_empty() {
            return Err(Error::Schema("no node types".into()));
        }
        let mut edge_types: Vec<EdgeType> = Vec::new();
        for (name, src, dst) in edges {
            if by_name.contains_key(&name) || edge_types.iter().any(|e| e.name == name) {
                return Err(Error::Schema(format!("duplicate type name `{name}`")));
            }
            let lookup = |t: &str| {
                by_name.get(t).copied().ok_or_else(|| {
                    Error::Schema(format!(
                        "edge type `{name}` references undeclared node type `{t}`"
                    ))
                })
            };
            let (src, dst) = (lookup(&src)?, lookup(&dst)?);
            edge_types.push(EdgeType {
                id: edge_types.len(),
                name,
                src,
                dst,
            });
        }
        Ok(Schema {
            node_types,
            edge_types,
        })
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        let mut declared_nodes: HashMap<String, usize> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: line_no,
                msg,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["node", name] => {
                    if declared_nodes.insert(name.to_string(), line_no).is_some() {
                        return Err(err(format!("duplicate type name `{name}`")));
                    }
                    nodes.push(name.to_string());
                }
                ["edge", name, src, dst] => {
                    edges.push((line_no, name.to_string(), src.to_string(), dst.to_string()))
                }
                ["node", ..] => return Err(err("expected `node <name>`".into())),
                ["edge", ..] => return Err(err("expected `edge <name> <src> <dst>`".into())),
                [kw, ..] => return Err(err(format!("unknown record `{kw}`"))),
                [] => unreachable!(),
            }
        }
        // Re-attach line numbers to edge-level semantic errors.
        for (line_no, name, src, dst) in &edges {
            for t in [src, dst] {
                if !declared_nodes.contains_key(t) {
                    return Err(Error::Parse {
                        path: origin.to_path_buf(),
                        line: *line_no,
                        msg: format!("dangling endpoint: edge `{name}` references undeclared node type `{t}`"),
                    });
                }
            }
        }
        Schema::new(
            nodes,
            edges.into_iter().map(|(_, n, s, d)| (n, s, d)),
        )
    }

    pub fn node_types(&self) -> &[NodeType] {
        &self.node_types
    }

    pub fn edge_types(&self) -> &[EdgeType] {
        &self.edge_types
    }

    pub fn node_type_id(&self, name: &str) -> Option<usize> {
        self.node_types.iter().position(|t| t.name == name)
    }

    pub fn edge_type_id(&self, name: &str) -> Option<usize> {
        self.edge_types.iter().position(|t| t.name == name)
    }

    pub fn node_type_name(&self, id: usize) -> &str {
        &self.node_types[id].name
    }

    /// First declared edge type joining the unordered pair `{a, b}`, with
    /// `true` when it must be traversed against its declared direction.
    pub fn connecting_edge(&self, a: usize, b: usize) -> Option<(usize, bool)> {
        self.edge_types.iter().find_map(|e| {
            if e.src == a && e.dst == b {
                Some((e.id, false))
            } else if e.src == b && e.dst == a {
                Some((e.id, true))
            } else {
                None
            }
        })
    }
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<Schema> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Schema::parse(&text, path)
}
