//! Meta-path views: each palindromic meta-path turns the heterogeneous
//! snapshot series into a homogeneous proximity series over its anchor type.

mod commuting;
mod metapath;
mod series;

pub use commuting::{commuting_matrix, commuting_matrix_with, hop_matrices, multiply_chain, ChainOrder};
pub use metapath::{parse_metapath, MetaPath, Step, MAX_PATH_NODES};
pub use series::{
    build_views, pathsim, pathsim_series, views_from_cache_bytes, views_to_cache_bytes, Proximity,
    ViewSeries, DENSE_THRESHOLD,
};
