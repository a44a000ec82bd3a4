//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every operation appends a node holding its value and the indices of its
//! inputs. [`Tape::backward`] walks the nodes in exact reverse order and
//! accumulates adjoints additively. Nodes built only from constants carry no
//! gradient and are skipped.

use ndarray::{s, Array2, Axis, Zip};

use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// `n×m + 1×m`, the row vector broadcast over rows.
    AddRow(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    /// `n×m ⊙ n×1`, the column broadcast over columns.
    MulCol(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    SoftmaxRow(Var),
    LogSoftmaxRow(Var),
    LogSigmoid(Var),
    Log(Var),
    Sum(Var),
    SumRows(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    GatherRows(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    tracked: bool,
}

/// Records a computation for one backward pass. Single threaded; build one
/// tape per worker and merge gradients afterwards.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of tracked leaves after [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient of a leaf; `None` when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn shape_err(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::shape(op, format!("{a:?} vs {b:?}"))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log σ(x)` without overflow.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn softmax_rows(a: &Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
    out
}

fn log_softmax_rows(a: &Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|x| x - lse);
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Scalar value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// A leaf whose gradient is wanted.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    fn push_raw(&mut self, value: Array2<f64>, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Array2<f64>, op: Op) -> Result<Var> {
        if cfg!(debug_assertions) && value.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(name));
        }
        let tracked = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::AddRow(a, b)
            | Op::Sub(a, b)
            | Op::Hadamard(a, b)
            | Op::MulCol(a, b) => self.tracked(*a) || self.tracked(*b),
            Op::Scale(a, _)
            | Op::OneMinus(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::SoftmaxRow(a)
            | Op::LogSoftmaxRow(a)
            | Op::LogSigmoid(a)
            | Op::Log(a)
            | Op::Sum(a)
            | Op::SumRows(a)
            | Op::SliceCols(a, ..)
            | Op::GatherRows(a, _) => self.tracked(*a),
            Op::ConcatCols(vs) => vs.iter().any(|v| self.tracked(*v)),
        };
        Ok(self.push_raw(value, op, tracked))
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(shape_err("matmul", sa, sb));
        }
        let v = self.value(a).dot(self.value(b));
        self.push("matmul", v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("add", sa, sb));
        }
        let v = self.value(a) + self.value(b);
        self.push("add", v, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr != (1, sa.1) {
            return Err(shape_err("add_row", sa, sr));
        }
        let v = self.value(a) + self.value(row);
        self.push("add_row", v, Op::AddRow(a, row))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("sub", sa, sb));
        }
        let v = self.value(a) - self.value(b);
        self.push("sub", v, Op::Sub(a, b))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("hadamard", sa, sb));
        }
        let v = self.value(a) * self.value(b);
        self.push("hadamard", v, Op::Hadamard(a, b))
    }

    /// Scales row `i` of `a` by `col[i, 0]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (sa, sc) = (self.shape(a), self.shape(col));
        if sc != (sa.0, 1) {
            return Err(shape_err("mul_col", sa, sc));
        }
        let v = self.value(a) * self.value(col);
        self.push("mul_col", v, Op::MulCol(a, col))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let v = self.value(a) * k;
        self.push("scale", v, Op::Scale(a, k))
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).mapv(|x| 1.0 - x);
        self.push("one_minus", v, Op::OneMinus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).mapv(sigmoid);
        self.push("sigmoid", v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).mapv(f64::tanh);
        self.push("tanh", v, Op::Tanh(a))
    }

    pub fn softmax_row(&mut self, a: Var) -> Result<Var> {
        let v = softmax_rows(self.value(a));
        self.push("softmax_row", v, Op::SoftmaxRow(a))
    }

    /// Row-wise `log softmax`, computed without forming the softmax.
    pub fn log_softmax_row(&mut self, a: Var) -> Result<Var> {
        let v = log_softmax_rows(self.value(a));
        self.push("log_softmax_row", v, Op::LogSoftmaxRow(a))
    }

    /// Elementwise `log σ(a)`.
    pub fn log_sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).mapv(log_sigmoid);
        self.push("log_sigmoid", v, Op::LogSigmoid(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if self.value(a).iter().any(|&x| x <= 0.0) {
            return Err(Error::Invalid("log of a non-positive value".into()));
        }
        let v = self.value(a).mapv(f64::ln);
        self.push("log", v, Op::Log(a))
    }

    /// Sum of all entries, as `1×1`.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.push("sum", v, Op::Sum(a))
    }

    /// Per-row sums, as `n×1`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push("sum_rows", v, Op::SumRows(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Invalid("concat of nothing".into()));
        };
        let rows = self.shape(first).0;
        if let Some(bad) = parts.iter().find(|p| self.shape(**p).0 != rows) {
            return Err(shape_err("concat_cols", self.shape(first), self.shape(*bad)));
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views)
            .map_err(|e| Error::shape("concat_cols", e.to_string()))?;
        self.push("concat_cols", v, Op::ConcatCols(parts.to_vec()))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let sa = self.shape(a);
        if start >= end || end > sa.1 {
            return Err(Error::shape("slice_cols", format!("{start}..{end} of {sa:?}")));
        }
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        self.push("slice_cols", v, Op::SliceCols(a, start, end))
    }

    /// Rows `idx[k]` of `a`, in order; repeats allowed.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let sa = self.shape(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= sa.0) {
            return Err(Error::shape("gather_rows", format!("row {bad} of {sa:?}")));
        }
        let v = self.value(a).select(Axis(0), idx);
        self.push("gather_rows", v, Op::GatherRows(a, idx.to_vec()))
    }

    /// Reverse sweep from a scalar `loss`. Intermediate adjoints are dropped
    /// as soon as they have been propagated; only leaf gradients survive.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::shape("backward", format!("loss is {:?}, not scalar", self.shape(loss))));
        }
        if !self.tracked(loss) {
            return Err(Error::Invalid("loss does not depend on any parameter".into()));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let mut acc = |v: Var, delta: Array2<f64>| {
            if !self.tracked(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &delta,
                slot => *slot = Some(delta),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.tracked(*a) {
                    acc(*a, g.dot(&val(*b).t()));
                }
                if self.tracked(*b) {
                    acc(*b, val(*a).t().dot(g));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(a, r) => {
                acc(*a, g.clone());
                acc(*r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, -g);
            }
            Op::Hadamard(a, b) => {
                acc(*a, g * val(*b));
                acc(*b, g * val(*a));
            }
            Op::MulCol(a, c) => {
                acc(*a, g * val(*c));
                acc(*c, (g * val(*a)).sum_axis(Axis(1)).insert_axis(Axis(1)));
            }
            Op::Scale(a, k) => acc(*a, g * *k),
            Op::OneMinus(a) => acc(*a, -g),
            Op::Sigmoid(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(y).for_each(|d, &s| *d *= s * (1.0 - s));
                acc(*a, d);
            }
            Op::Tanh(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(y).for_each(|d, &t| *d *= 1.0 - t * t);
                acc(*a, d);
            }
            Op::SoftmaxRow(a) => {
                let dot = (g * y).sum_axis(Axis(1)).insert_axis(Axis(1));
                acc(*a, y * &(g - &dot));
            }
            Op::LogSoftmaxRow(a) => {
                let gsum = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                acc(*a, g - &(y.mapv(f64::exp) * &gsum));
            }
            Op::LogSigmoid(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(val(*a))
                    .for_each(|d, &x| *d *= sigmoid(-x));
                acc(*a, d);
            }
            Op::Log(a) => acc(*a, g / val(*a)),
            Op::Sum(a) => acc(*a, Array2::from_elem(self.shape(*a), g[[0, 0]])),
            Op::SumRows(a) => {
                let (r, c) = self.shape(*a);
                acc(*a, g.broadcast((r, c)).unwrap().to_owned());
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let w = self.shape(*p).1;
                    acc(*p, g.slice(s![.., start..start + w]).to_owned());
                    start += w;
                }
            }
            Op::SliceCols(a, start, end) => {
                let mut d = Array2::zeros(self.shape(*a));
                d.slice_mut(s![.., *start..*end]).assign(g);
                acc(*a, d);
            }
            Op::GatherRows(a, idx) => {
                let mut d = Array2::zeros(self.shape(*a));
                for (k, &r) in idx.iter().enumerate() {
                    let mut row = d.row_mut(r);
                    row += &g.row(k);
                }
                acc(*a, d);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_examples() {
        let mut t = Tape::new();
        let z = t.constant(array![[0.0, 0.0]]);
        let s = t.sigmoid(z).unwrap();
        assert_eq!(t.value(s), &array![[0.5, 0.5]]);
        let sm = t.softmax_row(z).unwrap();
        assert_eq!(t.value(sm), &array![[0.5, 0.5]]);
        let a = t.constant(array![[1.0, 2.0]]);
        let b = t.constant(array![[3.0, 4.0]]);
        let h = t.hadamard(a, b).unwrap();
        assert_eq!(t.value(h), &array![[3.0, 8.0]]);
    }

    #[test]
    fn shape_errors() {
        let mut t = Tape::new();
        let a = t.constant(Array2::zeros((2, 3)));
        let b = t.constant(Array2::zeros((2, 3)));
        assert!(t.matmul(a, b).is_err());
        let r = t.constant(Array2::zeros((1, 2)));
        assert!(t.add_row(a, r).is_err());
        assert!(t.log(a).is_err());
    }

    #[test]
    fn linear_map_gradient() {
        let mut t = Tape::new();
        let w = t.param(array![[0.3, -1.0], [2.0, 0.5]]);
        let x = t.constant(array![[1.0], [1.0]]);
        let y = t.matmul(w, x).unwrap();
        let loss = t.sum(y).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap(), &array![[1.0, 1.0], [1.0, 1.0]]);
    }

    #[test]
    fn zero_scaled_loss_has_zero_gradients() {
        let mut t = Tape::new();
        let w = t.param(array![[0.3, -1.0]]);
        let s = t.sum(w).unwrap();
        let loss = t.scale(s, 0.0).unwrap();
        let g = t.backward(loss).unwrap();
        assert!(g.get(w).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn backward_errors() {
        let mut t = Tape::new();
        let w = t.param(array![[1.0, 2.0]]);
        assert!(t.backward(w).is_err());
        let c = t.constant(array![[1.0]]);
        assert!(t.backward(c).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut t = Tape::new();
        let a = t.constant(Array2::from_shape_fn((20, 7), |_| rng.random_range(-30.0..30.0)));
        let s = t.softmax_row(a).unwrap();
        for row in t.value(s).rows() {
            assert!(row.iter().all(|&x| x >= 0.0));
            assert!((row.sum() - 1.0).abs() <= 1e-12);
        }
    }

    /// Central-difference check of `f` at `x0` against the tape gradient.
    fn check_op(x0: Array2<f64>, f: impl Fn(&mut Tape, Var) -> Var) {
        let mut t = Tape::new();
        let x = t.param(x0.clone());
        let out = f(&mut t, x);
        let loss = t.sum(out).unwrap();
        let g = t.backward(loss).unwrap().get(x).unwrap().clone();
        let eval = |v: Array2<f64>| {
            let mut t = Tape::new();
            let x = t.param(v);
            let out = f(&mut t, x);
            let l = t.sum(out).unwrap();
            t.scalar(l)
        };
        let eps = 1e-5;
        for idx in 0..x0.len() {
            let (r, c) = (idx / x0.ncols(), idx % x0.ncols());
            let mut p = x0.clone();
            p[[r, c]] += eps;
            let mut m = x0.clone();
            m[[r, c]] -= eps;
            let num = (eval(p) - eval(m)) / (2.0 * eps);
            let ana = g[[r, c]];
            // Absolute floor covers central-difference roundoff on tiny gradients.
            let tol = 1e-6 * ana.abs().max(num.abs()) + 1e-9;
            assert!((ana - num).abs() <= tol, "({r},{c}) analytic {ana} numeric {num}");
        }
    }

    fn rand_mat(seed: u64, r: usize, c: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn op_gradients_match_finite_differences() {
        let w = rand_mat(1, 3, 4);
        let wc = w.clone();
        // Multiply by a random weight so sum() does not hide structure.
        let weigh = move |t: &mut Tape, v: Var, k: u64| {
            let (r, c) = t.shape(v);
            let m = t.constant(rand_mat(100 + k, r, c));
            t.hadamard(v, m).unwrap()
        };
        check_op(rand_mat(2, 2, 3), move |t, x| {
            let w = t.constant(wc.clone());
            let y = t.matmul(x, w).unwrap();
            weigh(t, y, 0)
        });
        check_op(rand_mat(3, 4, 2), move |t, x| {
            let a = t.constant(w.clone());
            t.matmul(a, x).unwrap()
        });
        check_op(rand_mat(4, 3, 3), |t, x| {
            let y = t.sigmoid(x).unwrap();
            weigh(t, y, 1)
        });
        check_op(rand_mat(5, 3, 3), |t, x| {
            let y = t.tanh(x).unwrap();
            weigh(t, y, 2)
        });
        check_op(rand_mat(6, 3, 4), |t, x| {
            let y = t.softmax_row(x).unwrap();
            weigh(t, y, 3)
        });
        check_op(rand_mat(7, 3, 4), |t, x| {
            let y = t.log_softmax_row(x).unwrap();
            weigh(t, y, 4)
        });
        check_op(rand_mat(8, 3, 4).mapv(|v| v * 20.0), |t, x| {
            let y = t.log_sigmoid(x).unwrap();
            weigh(t, y, 5)
        });
        check_op(rand_mat(9, 3, 4).mapv(|v| v.abs() + 0.5), |t, x| {
            let y = t.log(x).unwrap();
            weigh(t, y, 6)
        });
        check_op(rand_mat(10, 3, 4), |t, x| {
            let y = t.one_minus(x).unwrap();
            let y = t.hadamard(y, x).unwrap();
            weigh(t, y, 7)
        });
        check_op(rand_mat(11, 3, 4), |t, x| {
            let col = t.slice_cols(x, 1, 2).unwrap();
            let y = t.mul_col(x, col).unwrap();
            weigh(t, y, 8)
        });
        check_op(rand_mat(12, 3, 4), |t, x| {
            let bias = t.constant(rand_mat(13, 1, 4));
            let y = t.add_row(x, bias).unwrap();
            let y = t.sub(y, x).unwrap();
            let y = t.add(y, x).unwrap();
            let y = t.hadamard(y, x).unwrap();
            weigh(t, y, 9)
        });
        check_op(rand_mat(14, 1, 4), |t, x| {
            let big = t.constant(rand_mat(15, 3, 4));
            let y = t.add_row(big, x).unwrap();
            let y = t.hadamard(y, y).unwrap();
            weigh(t, y, 10)
        });
        check_op(rand_mat(16, 3, 2), |t, x| {
            let c = t.constant(rand_mat(17, 3, 3));
            let y = t.concat_cols(&[x, c, x]).unwrap();
            let y = t.sum_rows(y).unwrap();
            let y = t.hadamard(y, y).unwrap();
            weigh(t, y, 11)
        });
        check_op(rand_mat(18, 4, 3), |t, x| {
            let y = t.gather_rows(x, &[2, 0, 2, 3]).unwrap();
            let y = t.scale(y, -1.5).unwrap();
            let y = t.hadamard(y, y).unwrap();
            weigh(t, y, 12)
        });
        check_op(rand_mat(19, 1, 3), |t, x| {
            let k = t.constant(rand_mat(20, 3, 1));
            let y = t.matmul(x, k).unwrap();
            let c = t.sigmoid(y).unwrap();
            let z = t.constant(rand_mat(21, 1, 5));
            t.mul_col(z, c).unwrap()
        });
    }
}
