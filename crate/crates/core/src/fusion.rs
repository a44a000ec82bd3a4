//! Attention over per-view node vectors.
//!
//! Each view `k` contributes a `B×d` block of final hidden states. A shared
//! scoring map `e = tanh(H W + b) · q` gives one raw score per node and
//! view; a row softmax over views turns the scores into weights, and the
//! fused embedding is the weighted sum of the view vectors.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::encoder::{load_params, ParamVars};
use crate::error::{Error, Result};
use crate::nn::{xavier_uniform, ParamId, ParamStore, SeededRng, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FusionKind {
    #[default]
    Attention,
    Uniform,
}

impl fmt::Display for FusionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionKind::Attention => "attention",
            FusionKind::Uniform => "uniform",
        })
    }
}

impl FromStr for FusionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(FusionKind::Attention),
            "uniform" => Ok(FusionKind::Uniform),
            _ => Err(Error::Invalid(format!("unknown fusion `{s}` (attention|uniform)"))),
        }
    }
}

/// Scoring map: `w` is `d×d_att`, `b` is `1×d_att`, `q` is `d_att×1`.
#[derive(Debug, Clone, Copy)]
pub struct FusionParams {
    pub w: ParamId,
    pub b: ParamId,
    pub q: ParamId,
}

impl FusionParams {
    pub fn init(store: &mut ParamStore, prefix: &str, dim: usize, att_dim: usize, rng: &mut SeededRng) -> Self {
        let w = store.add(format!("{prefix}.att.w"), xavier_uniform(rng, dim, att_dim));
        let b = store.add(format!("{prefix}.att.b"), Array2::zeros((1, att_dim)));
        let q = store.add(format!("{prefix}.att.q"), xavier_uniform(rng, att_dim, 1));
        FusionParams { w, b, q }
    }
}

/// Raw scores `B×K` for the view blocks `hs[k]` (each `B×d`).
pub fn score_vars(tape: &mut Tape, p: &FusionParams, vars: &impl ParamVars, hs: &[Var]) -> Result<Var> {
    if hs.is_empty() {
        return Err(Error::Invalid("attention needs at least one view".into()));
    }
    let mut cols = Vec::with_capacity(hs.len());
    for &h in hs {
        let a = tape.matmul(h, vars.var(p.w))?;
        let a = tape.add_row(a, vars.var(p.b))?;
        let a = tape.tanh(a)?;
        cols.push(tape.matmul(a, vars.var(p.q))?);
    }
    tape.concat_cols(&cols)
}

/// Weighted sum of the view blocks with per-node weights `weights` (`B×K`).
pub fn fuse_vars(tape: &mut Tape, weights: Var, hs: &[Var]) -> Result<Var> {
    let (_, k) = tape.shape(weights);
    if k != hs.len() || hs.is_empty() {
        return Err(Error::shape("fuse", format!("{k} weight columns for {} views", hs.len())));
    }
    let mut acc: Option<Var> = None;
    for (i, &h) in hs.iter().enumerate() {
        let w = tape.slice_cols(weights, i, i + 1)?;
        let term = tape.mul_col(h, w)?;
        acc = Some(match acc {
            None => term,
            Some(a) => tape.add(a, term)?,
        });
    }
    Ok(acc.expect("at least one view"))
}

/// Attention weights `B×K` and fused embedding `B×d` on the tape.
pub fn attend_vars(tape: &mut Tape, p: &FusionParams, vars: &impl ParamVars, hs: &[Var]) -> Result<(Var, Var)> {
    let scores = score_vars(tape, p, vars, hs)?;
    let weights = tape.softmax_row(scores)?;
    let z = fuse_vars(tape, weights, hs)?;
    Ok((weights, z))
}

/// Mean of the view blocks on the tape.
pub fn uniform_vars(tape: &mut Tape, hs: &[Var]) -> Result<(Var, Var)> {
    let Some(&first) = hs.first() else {
        return Err(Error::Invalid("fusion needs at least one view".into()));
    };
    let (b, _) = tape.shape(first);
    let weights = tape.constant(Array2::from_elem((b, hs.len()), 1.0 / hs.len() as f64));
    let z = fuse_vars(tape, weights, hs)?;
    Ok((weights, z))
}

fn check_views(views: &[Array2<f64>]) -> Result<()> {
    let Some(first) = views.first() else {
        return Err(Error::Invalid("fusion needs at least one view".into()));
    };
    if let Some(v) = views.iter().find(|v| v.dim() != first.dim()) {
        return Err(Error::shape(
            "fusion",
            format!("view blocks {:?} and {:?} differ", first.dim(), v.dim()),
        ));
    }
    Ok(())
}

/// Per-node attention weights (`B×K`, rows on the simplex).
pub fn attention_scores(store: &ParamStore, p: &FusionParams, views: &[Array2<f64>]) -> Result<Array2<f64>> {
    check_views(views)?;
    let mut tape = Tape::new();
    let vars = load_params(&mut tape, store, false);
    let hs: Vec<Var> = views.iter().map(|v| tape.constant(v.clone())).collect();
    let scores = score_vars(&mut tape, p, &vars, &hs)?;
    let w = tape.softmax_row(scores)?;
    Ok(tape.value(w).clone())
}

/// `z_i = Σ_k weights[i,k] · views[k][i,:]`.
pub fn fuse(weights: &Array2<f64>, views: &[Array2<f64>]) -> Result<Array2<f64>> {
    check_views(views)?;
    let (b, d) = views[0].dim();
    if weights.dim() != (b, views.len()) {
        return Err(Error::shape(
            "fuse",
            format!("weights {:?}, expected ({b}, {})", weights.dim(), views.len()),
        ));
    }
    let mut z = Array2::zeros((b, d));
    for (k, v) in views.iter().enumerate() {
        for i in 0..b {
            let w = weights[[i, k]];
            z.row_mut(i).scaled_add(w, &v.row(i));
        }
    }
    Ok(z)
}

pub fn fuse_uniform(views: &[Array2<f64>]) -> Result<Array2<f64>> {
    check_views(views)?;
    let b = views[0].nrows();
    fuse(&Array2::from_elem((b, views.len()), 1.0 / views.len() as f64), views)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::seeded_rng;
    use ndarray::array;

    fn documented() -> (ParamStore, FusionParams) {
        let mut s = ParamStore::new();
        let p = FusionParams::init(&mut s, "g", 2, 2, &mut seeded_rng(0));
        *s.get_mut(p.w) = Array2::eye(2);
        *s.get_mut(p.q) = array![[1.0], [1.0]];
        (s, p)
    }

    #[test]
    fn documented_case() {
        let (s, p) = documented();
        let w = attention_scores(&s, &p, &[array![[1.0, 0.0]], array![[0.0, 0.0]]]).unwrap();
        let oracle = 1.0 / (1.0 + (-1f64.tanh()).exp());
        assert!((w[[0, 0]] - oracle).abs() < 1e-12, "{w}");
        assert!((w[[0, 0]] - 0.6816).abs() < 1e-4);
        assert!((w[[0, 1]] - 0.3184).abs() < 1e-4);
        let z = fuse(&w, &[array![[1.0, 0.0]], array![[0.0, 0.0]]]).unwrap();
        assert!((z[[0, 0]] - oracle).abs() < 1e-12 && z[[0, 1]] == 0.0);
    }

    #[test]
    fn identical_and_single() {
        let (s, p) = documented();
        let v = array![[0.3, -0.2], [1.0, 2.0]];
        let w = attention_scores(&s, &p, &[v.clone(), v.clone()]).unwrap();
        assert!(w.iter().all(|&x| x == 0.5));
        let w = attention_scores(&s, &p, std::slice::from_ref(&v)).unwrap();
        assert!(w.iter().all(|&x| x == 1.0));
        assert!(attention_scores(&s, &p, &[]).is_err());
        assert!(attention_scores(&s, &p, &[v, array![[1.0, 2.0]]]).is_err());
    }

    #[test]
    fn uniform_and_selection() {
        let u = fuse_uniform(&[array![[2.0, 0.0]], array![[0.0, 2.0]]]).unwrap();
        assert_eq!(u, array![[1.0, 1.0]]);
        let z = fuse(&array![[1.0, 0.0]], &[array![[4.0, 5.0]], array![[7.0, 8.0]]]).unwrap();
        assert_eq!(z, array![[4.0, 5.0]]);
        assert!(fuse(&array![[1.0]], &[array![[4.0, 5.0]], array![[7.0, 8.0]]]).is_err());
        assert!(fuse_uniform(&[]).is_err());
    }

    #[test]
    fn fusion_kind_parse() {
        assert_eq!("uniform".parse::<FusionKind>().unwrap(), FusionKind::Uniform);
        assert!("max".parse::<FusionKind>().is_err());
    }
}
