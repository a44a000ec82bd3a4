//! The full multi-view model: one encoder per view, one fusion block per
//! anchor type, and an optional classifier head.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::encoder::{encode_inputs, load_params, view_inputs, CellKind, ParamVars, ViewEncoder};
use crate::error::{Error, Result};
use crate::fusion::{attend_vars, uniform_vars, FusionKind, FusionParams};
use crate::nn::{seeded_rng, xavier_uniform, ParamId, ParamStore, Tape, Var};
use crate::views::ViewSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Recommendation,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Classification => "classification",
            TaskKind::Recommendation => "recommendation",
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(TaskKind::Classification),
            "recommendation" => Ok(TaskKind::Recommendation),
            _ => Err(Error::Invalid(format!(
                "unknown task `{s}` (classification|recommendation)"
            ))),
        }
    }
}

/// Affine `d → C` map; its row softmax is the class distribution.
#[derive(Debug, Clone, Copy)]
pub struct ClassifierHead {
    pub w: ParamId,
    pub b: ParamId,
    pub n_classes: usize,
}

/// Views sharing an anchor node type, with their encoders and fusion block.
#[derive(Debug, Clone)]
pub struct Group {
    pub anchor_type: usize,
    pub n_nodes: usize,
    /// Indices into the model's view list.
    pub views: Vec<usize>,
    pub encoders: Vec<ViewEncoder>,
    /// `None` under uniform fusion.
    pub fusion: Option<FusionParams>,
}

/// Architecture choices that fix the parameter layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub dim: usize,
    pub cell: CellKind,
    pub fusion: FusionKind,
    /// Classifier output count; `None` for no head.
    pub n_classes: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub store: ParamStore,
    pub groups: Vec<Group>,
    pub head: Option<ClassifierHead>,
    pub config: ModelConfig,
}

/// Tape nodes for one group's forward pass over a node batch.
#[derive(Debug, Clone)]
pub struct GroupPass {
    /// Per view, final hidden states (`B×d`).
    pub hidden: Vec<Var>,
    /// Per view, decoder logits (`B×N`).
    pub logits: Vec<Var>,
    /// View weights, `B×K`.
    pub weights: Var,
    /// Fused embedding, `B×d`.
    pub z: Var,
}

/// Frozen outputs for a node batch of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub z: Array2<f64>,
    pub weights: Array2<f64>,
}

impl Model {
    /// Builds one group per entry of `anchors` (node type ids), assigning
    /// each view to the group of its anchor type. Parameters are registered
    /// group by group, view by view, so the layout depends only on the
    /// arguments.
    pub fn new(views: &[ViewSeries], anchors: &[usize], config: ModelConfig) -> Result<Self> {
        if config.dim == 0 {
            return Err(Error::Invalid("embedding dimension must be positive".into()));
        }
        if let Some(v) = views.iter().find(|v| !anchors.contains(&v.anchor_type())) {
            return Err(Error::Invalid(format!(
                "view `{}` is not anchored on any model group",
                v.meta_path()
            )));
        }
        let mut rng = seeded_rng(config.seed);
        let mut store = ParamStore::new();
        let mut groups = Vec::with_capacity(anchors.len());
        for (g, &anchor) in anchors.iter().enumerate() {
            let members: Vec<usize> = (0..views.len())
                .filter(|&k| views[k].anchor_type() == anchor)
                .collect();
            let Some(&first) = members.first() else {
                return Err(Error::Invalid(format!("no view anchored on node type {anchor}")));
            };
            let n_nodes = views[first].n_nodes();
            let encoders = members
                .iter()
                .map(|&k| ViewEncoder::init(&mut store, &format!("g{g}.v{k}"), config.cell, n_nodes, config.dim, &mut rng))
                .collect();
            let fusion = match config.fusion {
                FusionKind::Attention => Some(FusionParams::init(&mut store, &format!("g{g}"), config.dim, config.dim, &mut rng)),
                FusionKind::Uniform => None,
            };
            groups.push(Group {
                anchor_type: anchor,
                n_nodes,
                views: members,
                encoders,
                fusion,
            });
        }
        let head = config.n_classes.map(|c| {
            let w = store.add("head.w", xavier_uniform(&mut rng, config.dim, c));
            let b = store.add("head.b", Array2::zeros((1, c)));
            ClassifierHead { w, b, n_classes: c }
        });
        Ok(Model {
            store,
            groups,
            head,
            config,
        })
    }

    /// Forward pass of group `g` over `nodes`.
    pub fn group_pass(
        &self,
        tape: &mut Tape,
        vars: &impl ParamVars,
        views: &[ViewSeries],
        g: usize,
        nodes: &[usize],
    ) -> Result<GroupPass> {
        let group = &self.groups[g];
        let mut hidden = Vec::with_capacity(group.views.len());
        let mut logits = Vec::with_capacity(group.views.len());
        for (&k, enc) in group.views.iter().zip(&group.encoders) {
            let view = views
                .get(k)
                .ok_or_else(|| Error::Invalid(format!("model expects view {k}, only {} given", views.len())))?;
            if view.n_nodes() != enc.n_nodes {
                return Err(Error::shape(
                    "model",
                    format!("view {k} has {} nodes, encoder expects {}", view.n_nodes(), enc.n_nodes),
                ));
            }
            let xs = view_inputs(view, nodes)?;
            let out = encode_inputs(tape, enc, vars, &xs)?;
            hidden.push(out.hidden);
            logits.push(out.logits);
        }
        let (weights, z) = match &group.fusion {
            Some(p) => attend_vars(tape, p, vars, &hidden)?,
            None => uniform_vars(tape, &hidden)?,
        };
        Ok(GroupPass {
            hidden,
            logits,
            weights,
            z,
        })
    }

    /// Class logits for embedding rows `z`.
    pub fn head_logits(&self, tape: &mut Tape, vars: &impl ParamVars, z: Var) -> Result<Var> {
        let head = self
            .head
            .ok_or_else(|| Error::Invalid("model has no classifier head".into()))?;
        let m = tape.matmul(z, vars.var(head.w))?;
        tape.add_row(m, vars.var(head.b))
    }

    /// Frozen embeddings and view weights for `nodes` of group `g`.
    pub fn embed(&self, views: &[ViewSeries], g: usize, nodes: &[usize]) -> Result<Embeddings> {
        let mut tape = Tape::new();
        let vars = load_params(&mut tape, &self.store, false);
        let pass = self.group_pass(&mut tape, &vars, views, g, nodes)?;
        Ok(Embeddings {
            z: tape.value(pass.z).clone(),
            weights: tape.value(pass.weights).clone(),
        })
    }

    /// Embeddings for every node of group `g`, in chunks to bound memory.
    pub fn embed_all(&self, views: &[ViewSeries], g: usize) -> Result<Embeddings> {
        const CHUNK: usize = 1024;
        let n = self.groups[g].n_nodes;
        let k = self.groups[g].views.len();
        let mut z = Array2::zeros((n, self.config.dim));
        let mut weights = Array2::zeros((n, k));
        for start in (0..n).step_by(CHUNK) {
            let nodes: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
            let e = self.embed(views, g, &nodes)?;
            z.slice_mut(ndarray::s![start..start + nodes.len(), ..]).assign(&e.z);
            weights
                .slice_mut(ndarray::s![start..start + nodes.len(), ..])
                .assign(&e.weights);
        }
        Ok(Embeddings { z, weights })
    }

    /// Class probabilities from the head for embedding rows `z`.
    pub fn predict_proba(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        let mut tape = Tape::new();
        let vars = load_params(&mut tape, &self.store, false);
        let z = tape.constant(z.clone());
        let logits = self.head_logits(&mut tape, &vars, z)?;
        let p = tape.softmax_row(logits)?;
        Ok(tape.value(p).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{parse_snapshots, Schema};
    use crate::views::build_views;
    use std::path::Path;

    fn toy_views() -> Vec<ViewSeries> {
        let schema = Schema::parse("node U\nnode I\nedge ui U I\n", Path::new("s")).unwrap();
        let edges = "1\tui\tu1\ti1\n1\tui\tu2\ti1\n1\tui\tu3\ti2\n2\tui\tu1\ti2\n2\tui\tu3\ti2\n";
        let series = parse_snapshots(&schema, edges, Path::new("e")).unwrap();
        build_views(&series, &["U-I-U", "I-U-I"]).unwrap()
    }

    fn config(fusion: FusionKind) -> ModelConfig {
        ModelConfig {
            dim: 4,
            cell: CellKind::Gru,
            fusion,
            n_classes: Some(2),
            seed: 9,
        }
    }

    #[test]
    fn groups_by_anchor() {
        let views = toy_views();
        let m = Model::new(&views, &[0, 1], config(FusionKind::Attention)).unwrap();
        assert_eq!(m.groups.len(), 2);
        assert_eq!(m.groups[0].views, vec![0]);
        assert_eq!(m.groups[1].views, vec![1]);
        assert_eq!(m.groups[0].n_nodes, 3);
        assert!(Model::new(&views, &[0], config(FusionKind::Attention)).is_err());
    }

    #[test]
    fn embed_is_deterministic() {
        let views = toy_views();
        let a = Model::new(&views, &[0, 1], config(FusionKind::Attention)).unwrap();
        let b = Model::new(&views, &[0, 1], config(FusionKind::Attention)).unwrap();
        assert_eq!(a.store, b.store);
        let e = a.embed_all(&views, 0).unwrap();
        assert_eq!(e, b.embed_all(&views, 0).unwrap());
        assert_eq!(e.z.dim(), (3, 4));
        assert!(e.weights.iter().all(|&w| w == 1.0));
        let p = a.predict_proba(&e.z).unwrap();
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_has_no_fusion_params() {
        let views = toy_views();
        let a = Model::new(&views, &[0, 1], config(FusionKind::Attention)).unwrap();
        let u = Model::new(&views, &[0, 1], config(FusionKind::Uniform)).unwrap();
        assert!(u.store.len() < a.store.len());
        assert!(u.groups.iter().all(|g| g.fusion.is_none()));
    }
}
