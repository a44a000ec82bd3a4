//! Multi-view embedding of dynamic heterogeneous graphs.
//!
//! The pipeline runs snapshot ingestion ([`graph`]), meta-path proximity
//! views ([`views`]), per-view recurrent encoders ([`encoder`]), attention
//! fusion ([`fusion`]) and joint training ([`trainer`]), then evaluation
//! ([`eval`]). [`pipeline`] ties the stages to files on disk.

mod binio;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod graph;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod pipeline;
pub mod synth;
pub mod trainer;
pub mod views;

pub use config::RunConfig;
pub use encoder::CellKind;
pub use error::{Error, Result};
pub use fusion::FusionKind;
pub use graph::{Schema, SnapshotSeries, SparseMatrix};
pub use model::{Model, ModelConfig, TaskKind};
pub use trainer::{Hyperparams, Supervision};
pub use views::ViewSeries;
