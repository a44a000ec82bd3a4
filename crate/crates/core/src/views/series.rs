use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::graph::{SnapshotSeries, SparseMatrix};
use crate::views::commuting::commuting_matrix;
use crate::views::metapath::{parse_metapath, MetaPath};
use crate::Schema;

/// Views denser than this are stored dense.
pub const DENSE_THRESHOLD: f64 = 0.25;

const CACHE_MAGIC: &[u8; 4] = b"DHVW";
const CACHE_VERSION: u32 = 1;

/// One proximity matrix `S^t`, stored whichever way is cheaper.
#[derive(Debug, Clone, PartialEq)]
pub enum Proximity {
    Sparse(SparseMatrix),
    Dense(Array2<f64>),
}

impl Proximity {
    fn from_sparse(m: SparseMatrix) -> Self {
        if m.density() > DENSE_THRESHOLD {
            Proximity::Dense(m.to_dense())
        } else {
            Proximity::Sparse(m)
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Proximity::Sparse(m) => m.n_rows(),
            Proximity::Dense(d) => d.nrows(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Proximity::Sparse(m) => m.get(i, j),
            Proximity::Dense(d) => d[[i, j]],
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, Proximity::Dense(_))
    }

    pub fn fill_row(&self, i: usize, out: &mut [f64]) {
        match self {
            Proximity::Sparse(m) => m.fill_row(i, out),
            Proximity::Dense(d) => out.copy_from_slice(d.row(i).as_slice().unwrap()),
        }
    }

    /// Dense `(rows.len(), n)` matrix of the selected rows.
    pub fn gather_rows(&self, rows: &[usize]) -> Array2<f64> {
        let n = self.dim();
        let mut out = Array2::zeros((rows.len(), n));
        for (k, &r) in rows.iter().enumerate() {
            self.fill_row(r, out.row_mut(k).into_slice().unwrap());
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            Proximity::Sparse(m) => m.to_dense(),
            Proximity::Dense(d) => d.clone(),
        }
    }
}

/// PathSim of a symmetric commuting matrix:
/// `S(i,j) = 2·M(i,j) / (M(i,i) + M(j,j))`, with `0/0 = 0`.
pub fn pathsim(m: &SparseMatrix) -> Result<SparseMatrix> {
    if m.n_rows() != m.n_cols() {
        return Err(Error::shape(
            "pathsim",
            format!("commuting matrix is {}x{}", m.n_rows(), m.n_cols()),
        ));
    }
    let diag = m.diagonal();
    SparseMatrix::from_triplets(
        m.n_rows(),
        m.n_cols(),
        m.iter().filter_map(|(i, j, v)| {
            let denom = diag[i] + diag[j];
            (denom > 0.0).then(|| (i, j, 2.0 * v / denom))
        }),
    )
}

/// The proximity time series of one meta-path view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSeries {
    view_id: usize,
    meta_path: MetaPath,
    steps: Vec<Proximity>,
}

impl ViewSeries {
    pub fn new(view_id: usize, meta_path: MetaPath, steps: Vec<Proximity>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Invalid("a view needs at least one time step".into()));
        }
        let n = steps[0].dim();
        if steps.iter().any(|s| s.dim() != n) {
            return Err(Error::shape("view", "time steps differ in size"));
        }
        Ok(ViewSeries {
            view_id,
            meta_path,
            steps,
        })
    }

    pub fn view_id(&self) -> usize {
        self.view_id
    }

    pub fn meta_path(&self) -> &MetaPath {
        &self.meta_path
    }

    pub fn anchor_type(&self) -> usize {
        self.meta_path.anchor_type()
    }

    /// Number of anchor nodes.
    pub fn n_nodes(&self) -> usize {
        self.steps[0].dim()
    }

    /// Number of time steps T.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Proximity at 1-based step `t`.
    pub fn at(&self, t: usize) -> &Proximity {
        &self.steps[t - 1]
    }

    pub fn last(&self) -> &Proximity {
        self.steps.last().unwrap()
    }

    pub fn steps(&self) -> &[Proximity] {
        &self.steps
    }

    /// Keeps the last `window` steps.
    pub fn truncate_front(&self, window: usize) -> Result<ViewSeries> {
        if window == 0 || window > self.len() {
            return Err(Error::Invalid(format!(
                "history window {window} outside 1..={}",
                self.len()
            )));
        }
        Ok(ViewSeries {
            view_id: self.view_id,
            meta_path: self.meta_path.clone(),
            steps: self.steps[self.len() - window..].to_vec(),
        })
    }
}

/// PathSim proximity series for one palindromic meta-path.
pub fn pathsim_series(series: &SnapshotSeries, path: &MetaPath) -> Result<ViewSeries> {
    pathsim_series_with_id(series, path, 0)
}

fn pathsim_series_with_id(series: &SnapshotSeries, path: &MetaPath, view_id: usize) -> Result<ViewSeries> {
    check_symmetric(path)?;
    let steps = (1..=series.len())
        .map(|t| pathsim_step(series, path, t))
        .collect::<Result<Vec<_>>>()?;
    ViewSeries::new(view_id, path.clone(), steps)
}

fn check_symmetric(path: &MetaPath) -> Result<()> {
    if !path.is_symmetric() {
        return Err(Error::MetaPath {
            spec: path.spec().to_string(),
            msg: "PathSim needs a palindromic meta-path with an even number of hops".into(),
        });
    }
    Ok(())
}

fn pathsim_step(series: &SnapshotSeries, path: &MetaPath, t: usize) -> Result<Proximity> {
    let m = commuting_matrix(series, path, t)?;
    Ok(Proximity::from_sparse(pathsim(&m)?))
}

/// One view per spec, in order. The (view × snapshot) grid is computed in
/// parallel; results do not depend on scheduling.
pub fn build_views<S: AsRef<str>>(series: &SnapshotSeries, specs: &[S]) -> Result<Vec<ViewSeries>> {
    if specs.is_empty() {
        return Err(Error::Invalid("at least one meta-path is required".into()));
    }
    let paths = specs
        .iter()
        .map(|s| parse_metapath(s.as_ref(), series.schema()))
        .collect::<Result<Vec<_>>>()?;
    paths.iter().try_for_each(check_symmetric)?;

    let t_count = series.len();
    let grid: Vec<(usize, usize)> = (0..paths.len())
        .flat_map(|v| (1..=t_count).map(move |t| (v, t)))
        .collect();
    let mut cells = grid
        .par_iter()
        .map(|&(v, t)| pathsim_step(series, &paths[v], t))
        .collect::<Result<Vec<_>>>()?
        .into_iter();

    paths
        .into_iter()
        .enumerate()
        .map(|(v, p)| ViewSeries::new(v, p, cells.by_ref().take(t_count).collect()))
        .collect()
}

/// Serializes views densely, row-major per time step.
pub fn views_to_cache_bytes(views: &[ViewSeries]) -> Vec<u8> {
    let mut w = Writer::new(CACHE_MAGIC, CACHE_VERSION);
    w.len(views.len());
    for v in views {
        w.len(v.view_id);
        w.str(v.meta_path.spec());
        w.len(v.n_nodes());
        w.len(v.len());
        for s in &v.steps {
            w.u32(s.is_dense() as u32);
            for x in s.to_dense().iter() {
                w.f64(*x);
            }
        }
    }
    w.finish()
}

pub fn views_from_cache_bytes(bytes: &[u8], schema: &Schema, origin: &Path) -> Result<Vec<ViewSeries>> {
    let mut r = Reader::open(bytes, origin, CACHE_MAGIC, CACHE_VERSION)?;
    let k = r.len()?;
    let mut views = Vec::with_capacity(k);
    for _ in 0..k {
        let id = r.len()?;
        let path = parse_metapath(&r.str()?, schema)?;
        let (n, t) = (r.len()?, r.len()?);
        let mut steps = Vec::with_capacity(t);
        for _ in 0..t {
            let dense_flag = r.u32()?;
            let values = (0..n * n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let d = Array2::from_shape_vec((n, n), values).map_err(|_| r.bad("bad view shape"))?;
            steps.push(if dense_flag == 1 {
                Proximity::Dense(d)
            } else {
                Proximity::Sparse(SparseMatrix::from_dense(&d)?)
            });
        }
        views.push(ViewSeries::new(id, path, steps)?);
    }
    r.expect_end()?;
    Ok(views)
}
