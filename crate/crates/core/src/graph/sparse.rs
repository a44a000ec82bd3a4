//! Compressed sparse row matrices with non-negative values.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows at or above this count are multiplied in parallel.
const PAR_ROWS: usize = 512;

/// CSR matrix. Columns are strictly increasing within each row, no stored
/// entry is zero, and every value is finite and non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            indptr: vec![0; n_rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets in any order;
    /// repeated coordinates are summed and zero results dropped.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (r, c, v) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::shape(
                    "from_triplets",
                    format!("entry ({r}, {c}) outside {n_rows}x{n_cols}"),
                ));
            }
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Data(format!(
                    "sparse entry ({r}, {c}) has invalid value {v}"
                )));
            }
            entries.push((r, c, v));
        }
        entries.sort_by_key(|e| (e.0, e.1));

        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        let mut rows = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                rows.push(r);
                last = Some((r, c));
            }
        }
        let mut keep_idx = Vec::with_capacity(indices.len());
        let mut keep_val = Vec::with_capacity(values.len());
        for ((r, c), v) in rows.into_iter().zip(indices).zip(values) {
            if v != 0.0 {
                indptr[r + 1] += 1;
                keep_idx.push(c);
                keep_val.push(v);
            }
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            indptr,
            indices: keep_idx,
            values: keep_val,
        })
    }

    /// Builds a matrix from raw CSR arrays, validating every invariant.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |msg: &str| Err(Error::Data(format!("invalid CSR arrays: {msg}")));
        if indptr.len() != n_rows + 1 || indptr[0] != 0 {
            return bad("row pointer length");
        }
        if indices.len() != values.len() || *indptr.last().unwrap() != indices.len() {
            return bad("entry count");
        }
        for r in 0..n_rows {
            if indptr[r] > indptr[r + 1] {
                return bad("row pointers not monotone");
            }
            let cols = &indices[indptr[r]..indptr[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c >= n_cols) {
                return bad("columns unsorted or out of range");
            }
        }
        if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return bad("values must be finite and positive");
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn from_dense(dense: &Array2<f64>) -> Result<Self> {
        let (r, c) = dense.dim();
        SparseMatrix::from_triplets(
            r,
            c,
            dense
                .indexed_iter()
                .filter(|(_, v)| **v != 0.0)
                .map(|((i, j), v)| (i, j, *v)),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn density(&self) -> f64 {
        let cells = self.n_rows * self.n_cols;
        if cells == 0 {
            0.0
        } else {
            self.nnz() as f64 / cells as f64
        }
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// Iterates stored entries as `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![0f64; self.nnz()];
        // Rows are visited in order, so each output row receives sorted columns.
        for (r, c, v) in self.iter() {
            let slot = next[c];
            indices[slot] = r;
            values[slot] = v;
            next[c] += 1;
        }
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            indptr,
            indices,
            values,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for (r, c, v) in self.iter() {
            out[[r, c]] = v;
        }
        out
    }

    /// Writes row `r` into `out`, which must have length `n_cols`.
    pub fn fill_row(&self, r: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let (cols, vals) = self.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            out[c] = v;
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && *self == self.transpose()
    }
}

/// Exact sparse product `a × b` (Gustavson's row-by-row algorithm).
pub fn spmm(a: &SparseMatrix, b: &SparseMatrix) -> Result<SparseMatrix> {
    if a.n_cols != b.n_rows {
        return Err(Error::shape(
            "spmm",
            format!(
                "{}x{} times {}x{}",
                a.n_rows, a.n_cols, b.n_rows, b.n_cols
            ),
        ));
    }
    let n_cols = b.n_cols;
    let row_product = |acc: &mut RowAccumulator, r: usize| -> (Vec<usize>, Vec<f64>) {
        let (a_cols, a_vals) = a.row(r);
        for (&k, &av) in a_cols.iter().zip(a_vals) {
            let (b_cols, b_vals) = b.row(k);
            for (&c, &bv) in b_cols.iter().zip(b_vals) {
                acc.add(c, av * bv);
            }
        }
        acc.drain_sorted()
    };

    let rows: Vec<(Vec<usize>, Vec<f64>)> = if a.n_rows >= PAR_ROWS {
        (0..a.n_rows)
            .into_par_iter()
            .map_init(|| RowAccumulator::new(n_cols), |acc, r| row_product(acc, r))
            .collect()
    } else {
        let mut acc = RowAccumulator::new(n_cols);
        (0..a.n_rows).map(|r| row_product(&mut acc, r)).collect()
    };

    let nnz = rows.iter().map(|(c, _)| c.len()).sum();
    let mut indptr = Vec::with_capacity(a.n_rows + 1);
    let mut indices = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    indptr.push(0);
    for (cols, vals) in rows {
        indices.extend(cols);
        values.extend(vals);
        indptr.push(indices.len());
    }
    Ok(SparseMatrix {
        n_rows: a.n_rows,
        n_cols,
        indptr,
        indices,
        values,
    })
}

/// Dense scatter buffer with an occupancy list.
struct RowAccumulator {
    sums: Vec<f64>,
    occupied: Vec<bool>,
    touched: Vec<usize>,
}

impl RowAccumulator {
    fn new(width: usize) -> Self {
        RowAccumulator {
            sums: vec![0.0; width],
            occupied: vec![false; width],
            touched: Vec::new(),
        }
    }

    fn add(&mut self, c: usize, v: f64) {
        if !self.occupied[c] {
            self.occupied[c] = true;
            self.touched.push(c);
        }
        self.sums[c] += v;
    }

    fn drain_sorted(&mut self) -> (Vec<usize>, Vec<f64>) {
        self.touched.sort_unstable();
        let mut cols = Vec::with_capacity(self.touched.len());
        let mut vals = Vec::with_capacity(self.touched.len());
        for &c in &self.touched {
            let v = self.sums[c];
            if v != 0.0 {
                cols.push(c);
                vals.push(v);
            }
            self.sums[c] = 0.0;
            self.occupied[c] = false;
        }
        self.touched.clear();
        (cols, vals)
    }
}
