//! Typed network model: schema, node universe, sparse adjacency and the
//! snapshot sequence built from an edge file.

mod schema;
mod snapshot;
mod sparse;

pub use schema::{load_schema, EdgeType, NodeType, Schema};
pub use snapshot::{load_snapshots, parse_snapshots, NodeUniverse, SnapshotSeries};
pub use sparse::{spmm, SparseMatrix};
