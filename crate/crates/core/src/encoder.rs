//! Per-view recurrent encoders and the reconstruction decoder.
//!
//! A view's encoder reads, for every node `i`, the proximity rows
//! `S^1(i,:) … S^T(i,:)` through a chain of `T` GRU or LSTM cells starting
//! from a zero state. The last hidden state is the node's view vector; the
//! decoder maps it to a distribution over the view's `N` nodes.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{xavier_uniform, ParamId, ParamStore, SeededRng, Tape, Var};
use crate::views::ViewSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    #[default]
    Gru,
    Lstm,
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
        })
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gru" => Ok(CellKind::Gru),
            "lstm" => Ok(CellKind::Lstm),
            _ => Err(Error::Invalid(format!("unknown cell kind `{s}` (gru|lstm)"))),
        }
    }
}

/// GRU weights. Inputs multiply from the left: `x (B×N) · w_z (N×d)`.
#[derive(Debug, Clone, Copy)]
pub struct GruParams {
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub w: ParamId,
    pub u: ParamId,
}

/// LSTM weights acting on `[h, x]` (`(d+N)×d`) plus row biases.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub w_f: ParamId,
    pub w_i: ParamId,
    pub w_o: ParamId,
    pub w_c: ParamId,
    pub b_f: ParamId,
    pub b_i: ParamId,
    pub b_o: ParamId,
    pub b_c: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub enum CellParams {
    Gru(GruParams),
    Lstm(LstmParams),
}

/// Affine `d → N` map followed by a row softmax.
#[derive(Debug, Clone, Copy)]
pub struct DecoderParams {
    pub w: ParamId,
    pub b: ParamId,
}

/// Encoder and decoder for one view.
#[derive(Debug, Clone, Copy)]
pub struct ViewEncoder {
    pub cell: CellParams,
    pub decoder: DecoderParams,
    pub n_nodes: usize,
    pub dim: usize,
}

impl ViewEncoder {
    /// Registers fresh Xavier-initialized weights (zero biases) under
    /// `prefix`.
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        kind: CellKind,
        n_nodes: usize,
        dim: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let mut w = |name: &str, r: usize, c: usize, rng: &mut SeededRng| {
            store.add(format!("{prefix}.{name}"), xavier_uniform(rng, r, c))
        };
        let cell = match kind {
            CellKind::Gru => CellParams::Gru(GruParams {
                w_z: w("gru.w_z", n_nodes, dim, rng),
                u_z: w("gru.u_z", dim, dim, rng),
                w_r: w("gru.w_r", n_nodes, dim, rng),
                u_r: w("gru.u_r", dim, dim, rng),
                w: w("gru.w", n_nodes, dim, rng),
                u: w("gru.u", dim, dim, rng),
            }),
            CellKind::Lstm => {
                let w_f = w("lstm.w_f", dim + n_nodes, dim, rng);
                let w_i = w("lstm.w_i", dim + n_nodes, dim, rng);
                let w_o = w("lstm.w_o", dim + n_nodes, dim, rng);
                let w_c = w("lstm.w_c", dim + n_nodes, dim, rng);
                let mut b = |name: &str| store.add(format!("{prefix}.lstm.{name}"), Array2::zeros((1, dim)));
                CellParams::Lstm(LstmParams {
                    w_f,
                    w_i,
                    w_o,
                    w_c,
                    b_f: b("b_f"),
                    b_i: b("b_i"),
                    b_o: b("b_o"),
                    b_c: b("b_c"),
                })
            }
        };
        let dec_w = store.add(format!("{prefix}.dec.w"), xavier_uniform(rng, dim, n_nodes));
        let dec_b = store.add(format!("{prefix}.dec.b"), Array2::zeros((1, n_nodes)));
        ViewEncoder {
            cell,
            decoder: DecoderParams { w: dec_w, b: dec_b },
            n_nodes,
            dim,
        }
    }

    pub fn kind(&self) -> CellKind {
        match self.cell {
            CellParams::Gru(_) => CellKind::Gru,
            CellParams::Lstm(_) => CellKind::Lstm,
        }
    }
}

/// Parameters already placed on a tape, indexed by [`ParamId`].
pub trait ParamVars {
    fn var(&self, id: ParamId) -> Var;
}

impl ParamVars for [Var] {
    fn var(&self, id: ParamId) -> Var {
        self[id.index()]
    }
}

impl ParamVars for Vec<Var> {
    fn var(&self, id: ParamId) -> Var {
        self[id.index()]
    }
}

/// One GRU step:
/// `z = σ(x W_z + h U_z)`, `r = σ(x W_r + h U_r)`,
/// `h̃ = tanh(x W + (r ⊙ h) U)`, `h' = (1 − z) ⊙ h + z ⊙ h̃`.
pub fn gru_step(tape: &mut Tape, p: &GruParams, vars: &impl ParamVars, x: Var, h: Var) -> Result<Var> {
    let gate = |tape: &mut Tape, w: ParamId, u: ParamId| -> Result<Var> {
        let a = tape.matmul(x, vars.var(w))?;
        let b = tape.matmul(h, vars.var(u))?;
        let s = tape.add(a, b)?;
        tape.sigmoid(s)
    };
    let z = gate(tape, p.w_z, p.u_z)?;
    let r = gate(tape, p.w_r, p.u_r)?;
    let xw = tape.matmul(x, vars.var(p.w))?;
    let rh = tape.hadamard(r, h)?;
    let rhu = tape.matmul(rh, vars.var(p.u))?;
    let pre = tape.add(xw, rhu)?;
    let cand = tape.tanh(pre)?;
    let keep = tape.one_minus(z)?;
    let old = tape.hadamard(keep, h)?;
    let new = tape.hadamard(z, cand)?;
    tape.add(old, new)
}

/// One LSTM step on `[h, x]`:
/// `f, i, o = σ([h,x] W_· + b_·)`, `c' = f ⊙ c + i ⊙ tanh([h,x] W_c + b_c)`,
/// `h' = o ⊙ tanh(c')`.
pub fn lstm_step(
    tape: &mut Tape,
    p: &LstmParams,
    vars: &impl ParamVars,
    x: Var,
    h: Var,
    c: Var,
) -> Result<(Var, Var)> {
    let hx = tape.concat_cols(&[h, x])?;
    let affine = |tape: &mut Tape, w: ParamId, b: ParamId| -> Result<Var> {
        let m = tape.matmul(hx, vars.var(w))?;
        tape.add_row(m, vars.var(b))
    };
    let f = affine(tape, p.w_f, p.b_f)?;
    let f = tape.sigmoid(f)?;
    let i = affine(tape, p.w_i, p.b_i)?;
    let i = tape.sigmoid(i)?;
    let o = affine(tape, p.w_o, p.b_o)?;
    let o = tape.sigmoid(o)?;
    let cand = affine(tape, p.w_c, p.b_c)?;
    let cand = tape.tanh(cand)?;
    let fc = tape.hadamard(f, c)?;
    let ic = tape.hadamard(i, cand)?;
    let c_new = tape.add(fc, ic)?;
    let tc = tape.tanh(c_new)?;
    let h_new = tape.hadamard(o, tc)?;
    Ok((h_new, c_new))
}

/// Tape nodes produced by encoding one batch through one view.
#[derive(Debug, Clone, Copy)]
pub struct EncodedBatch {
    /// Final hidden states, `B×d`.
    pub hidden: Var,
    /// Decoder logits, `B×N` (softmax gives the reconstruction rows).
    pub logits: Var,
}

/// Runs the chain over the inputs `xs[t]` (each `B×N`, constants) and
/// decodes the final state.
pub fn encode_inputs(
    tape: &mut Tape,
    enc: &ViewEncoder,
    vars: &impl ParamVars,
    xs: &[Array2<f64>],
) -> Result<EncodedBatch> {
    let Some(first) = xs.first() else {
        return Err(Error::Invalid("encoder needs at least one time step".into()));
    };
    let batch = first.nrows();
    let mut h = tape.constant(Array2::zeros((batch, enc.dim)));
    let mut c = tape.constant(Array2::zeros((batch, enc.dim)));
    for x in xs {
        if x.dim() != (batch, enc.n_nodes) {
            return Err(Error::shape(
                "encode",
                format!("input {:?}, expected ({batch}, {})", x.dim(), enc.n_nodes),
            ));
        }
        let x = tape.constant(x.clone());
        match &enc.cell {
            CellParams::Gru(p) => h = gru_step(tape, p, vars, x, h)?,
            CellParams::Lstm(p) => (h, c) = lstm_step(tape, p, vars, x, h, c)?,
        }
    }
    let m = tape.matmul(h, vars.var(enc.decoder.w))?;
    let logits = tape.add_row(m, vars.var(enc.decoder.b))?;
    Ok(EncodedBatch { hidden: h, logits })
}

/// Gathers the input rows of `nodes` for every step of `view`.
pub fn view_inputs(view: &ViewSeries, nodes: &[usize]) -> Result<Vec<Array2<f64>>> {
    if let Some(&bad) = nodes.iter().find(|&&n| n >= view.n_nodes()) {
        return Err(Error::Invalid(format!(
            "node index {bad} out of range for view `{}` with {} nodes",
            view.meta_path(),
            view.n_nodes()
        )));
    }
    Ok(view.steps().iter().map(|s| s.gather_rows(nodes)).collect())
}

/// Final hidden state per node and the decoded reconstruction rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    /// `B×d`.
    pub hidden: Array2<f64>,
    /// `B×N`, each row on the probability simplex.
    pub reconstruction: Array2<f64>,
}

/// Places every parameter of `store` on `tape`, tracked or not.
pub fn load_params(tape: &mut Tape, store: &ParamStore, tracked: bool) -> Vec<Var> {
    store
        .iter()
        .map(|(_, v)| {
            if tracked {
                tape.param(v.clone())
            } else {
                tape.constant(v.clone())
            }
        })
        .collect()
}

/// Encodes `nodes` (all of them when `None`) through one view with frozen
/// parameters.
pub fn encode_view(
    store: &ParamStore,
    enc: &ViewEncoder,
    view: &ViewSeries,
    nodes: Option<&[usize]>,
) -> Result<EncoderOutput> {
    if view.is_empty() {
        return Err(Error::Invalid("view has no time steps".into()));
    }
    if view.n_nodes() != enc.n_nodes {
        return Err(Error::shape(
            "encode_view",
            format!("view has {} nodes, encoder expects {}", view.n_nodes(), enc.n_nodes),
        ));
    }
    let all: Vec<usize>;
    let nodes = match nodes {
        Some(n) => n,
        None => {
            all = (0..view.n_nodes()).collect();
            &all
        }
    };
    let xs = view_inputs(view, nodes)?;
    let mut tape = Tape::new();
    let vars = load_params(&mut tape, store, false);
    let out = encode_inputs(&mut tape, enc, &vars, &xs)?;
    let recon = tape.softmax_row(out.logits)?;
    Ok(EncoderOutput {
        hidden: tape.value(out.hidden).clone(),
        reconstruction: tape.value(recon).clone(),
    })
}

/// Encodes the same node batch through each view with its own encoder.
pub fn batch_encode(
    store: &ParamStore,
    encoders: &[ViewEncoder],
    views: &[ViewSeries],
    nodes: &[usize],
) -> Result<Vec<EncoderOutput>> {
    if encoders.len() != views.len() {
        return Err(Error::shape(
            "batch_encode",
            format!("{} encoders for {} views", encoders.len(), views.len()),
        ));
    }
    encoders
        .iter()
        .zip(views)
        .map(|(e, v)| encode_view(store, e, v, Some(nodes)))
        .collect()
}

/// Array-level GRU cell, for callers outside a training tape.
pub fn gru_cell(store: &ParamStore, p: &GruParams, x: &Array2<f64>, h_prev: &Array2<f64>) -> Result<Array2<f64>> {
    let mut tape = Tape::new();
    let vars = load_params(&mut tape, store, false);
    let x = tape.constant(x.clone());
    let h = tape.constant(h_prev.clone());
    let out = gru_step(&mut tape, p, &vars, x, h)?;
    Ok(tape.value(out).clone())
}

/// Array-level LSTM cell; returns `(h, c)`.
pub fn lstm_cell(
    store: &ParamStore,
    p: &LstmParams,
    x: &Array2<f64>,
    h_prev: &Array2<f64>,
    c_prev: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let mut tape = Tape::new();
    let vars = load_params(&mut tape, store, false);
    let x = tape.constant(x.clone());
    let h = tape.constant(h_prev.clone());
    let c = tape.constant(c_prev.clone());
    let (h, c) = lstm_step(&mut tape, p, &vars, x, h, c)?;
    Ok((tape.value(h).clone(), tape.value(c).clone()))
}
