//! Mini-batch optimization of the joint objective.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{load_params, CellKind};
use crate::error::{Error, Result};
use crate::eval::{rank_of, ranking_report};
use crate::fusion::FusionKind;
use crate::model::Model;
use crate::nn::{seeded_rng, AdamState, ParamStore, SeededRng, Tape, Var, DEFAULT_LR};
use crate::objectives::{
    classification_loss_var, pair_scores_var, recommendation_loss_var, sample_negatives, structure_loss_var,
    weighted_targets, DEFAULT_ALPHA, DEFAULT_BETA,
};
use crate::views::ViewSeries;

/// Every knob of a training run. Recorded verbatim in run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub dim: usize,
    /// Snapshots of history before the last one; the encoder sees
    /// `history + 1` steps.
    pub history: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub neg_per_pos: usize,
    pub eval_negatives: usize,
    pub seed: u64,
    pub eval_seed: u64,
    pub cell: CellKind,
    pub fusion: FusionKind,
    pub workers: usize,
    pub val_fraction: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            dim: 128,
            history: 3,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            lr: DEFAULT_LR,
            batch_size: 500,
            epochs: 50,
            neg_per_pos: 4,
            eval_negatives: 99,
            seed: 1,
            eval_seed: 2020,
            cell: CellKind::Gru,
            fusion: FusionKind::Attention,
            workers: 1,
            val_fraction: 0.1,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.alpha < 1.0 || !self.alpha.is_finite() {
            return bad("alpha must be a finite value >= 1");
        }
        if self.beta < 0.0 || !self.beta.is_finite() {
            return bad("beta must be finite and non-negative");
        }
        if self.lr < 0.0 || !self.lr.is_finite() {
            return bad("lr must be finite and non-negative");
        }
        if self.batch_size == 0 || self.workers == 0 {
            return bad("batch_size and workers must be positive");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Task supervision for training, in model node indices.
#[derive(Debug, Clone)]
pub enum Supervision {
    Classification {
        /// Training label per anchor node.
        labels: Vec<Option<usize>>,
        /// Held-out `(node, class)` pairs used for checkpoint selection.
        val: Vec<(usize, usize)>,
    },
    Recommendation {
        /// Training positives per user, sorted.
        positives: Vec<Vec<usize>>,
        /// Items never offered as negatives to a user, sorted.
        known: Vec<Vec<usize>>,
        n_items: usize,
        /// Held-out `(user, item)` pairs with their ranking negatives.
        val: Vec<(usize, usize)>,
        val_negatives: Vec<Vec<usize>>,
    },
}

/// One optimization step's worth of work.
#[derive(Debug, Clone, PartialEq)]
pub enum Batch {
    Nodes {
        nodes: Vec<usize>,
        labels: Vec<Option<usize>>,
    },
    Pairs {
        users: Vec<usize>,
        /// `(user, item, is_positive)`.
        instances: Vec<(usize, usize, bool)>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchLoss {
    pub structure: f64,
    pub task: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub structure: f64,
    pub task: f64,
    pub total: f64,
    pub val_metric: f64,
}

pub type Grads = Vec<Option<Array2<f64>>>;

fn add_into(acc: &mut Grads, other: Grads) {
    for (a, b) in acc.iter_mut().zip(other) {
        match (a.as_mut(), b) {
            (Some(a), Some(b)) => *a += &b,
            (None, Some(b)) => *a = Some(b),
            _ => {}
        }
    }
}

fn split_even<T: Clone>(items: &[T], parts: usize) -> Vec<Vec<T>> {
    let parts = parts.max(1).min(items.len().max(1));
    let base = items.len() / parts;
    let extra = items.len() % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let len = base + usize::from(p < extra);
        out.push(items[start..start + len].to_vec());
        start += len;
    }
    out
}

fn structure_terms(
    tape: &mut Tape,
    model: &Model,
    views: &[ViewSeries],
    g: usize,
    logits: &[Var],
    nodes: &[usize],
    mask: Option<&[bool]>,
    alpha: f64,
) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for (&k, &lg) in model.groups[g].views.iter().zip(logits) {
        let mut w = weighted_targets(views[k].last(), nodes, alpha);
        if let Some(mask) = mask {
            for (mut row, &keep) in w.rows_mut().into_iter().zip(mask) {
                if !keep {
                    row.fill(0.0);
                }
            }
        }
        let l = structure_loss_var(tape, lg, w)?;
        acc = Some(match acc {
            None => l,
            Some(a) => tape.add(a, l)?,
        });
    }
    acc.ok_or_else(|| Error::Invalid("group without views".into()))
}

fn zero(tape: &mut Tape) -> Var {
    tape.constant(Array2::zeros((1, 1)))
}

fn finish_shard(tape: &mut Tape, vars: &[Var], ls: Var, la: Var, beta: f64) -> Result<(BatchLoss, Grads)> {
    let weighted = tape.scale(la, beta)?;
    let total = tape.add(ls, weighted)?;
    let loss = BatchLoss {
        structure: tape.scalar(ls),
        task: tape.scalar(la),
        total: tape.scalar(total),
    };
    let mut g = tape.backward(total)?;
    Ok((loss, vars.iter().map(|&v| g.take(v)).collect()))
}

fn node_shard(
    model: &Model,
    views: &[ViewSeries],
    hp: &Hyperparams,
    nodes: &[usize],
    labels: &[Option<usize>],
    n_labeled: usize,
) -> Result<(BatchLoss, Grads)> {
    let mut tape = Tape::new();
    let vars = load_params(&mut tape, &model.store, true);
    let pass = model.group_pass(&mut tape, &vars, views, 0, nodes)?;
    let ls = structure_terms(&mut tape, model, views, 0, &pass.logits, nodes, None, hp.alpha)?;
    let (pos, ys): (Vec<usize>, Vec<usize>) = labels
        .iter()
        .enumerate()
        .filter_map(|(p, y)| y.map(|y| (p, y)))
        .unzip();
    let la = if pos.is_empty() {
        zero(&mut tape)
    } else {
        let z = tape.gather_rows(pass.z, &pos)?;
        let logits = model.head_logits(&mut tape, &vars, z)?;
        classification_loss_var(&mut tape, logits, &ys, n_labeled)?
    };
    finish_shard(&mut tape, &vars, ls, la, hp.beta)
}

fn pair_shard(
    model: &Model,
    views: &[ViewSeries],
    hp: &Hyperparams,
    users: &[usize],
    instances: &[(usize, usize, bool)],
    struct_items: &[usize],
    n_instances: usize,
) -> Result<(BatchLoss, Grads)> {
    let mut tape = Tape::new();
    let vars = load_params(&mut tape, &model.store, true);
    let mut items: Vec<usize> = instances.iter().map(|x| x.1).chain(struct_items.iter().copied()).collect();
    items.sort_unstable();
    items.dedup();

    let up = model.group_pass(&mut tape, &vars, views, 0, users)?;
    let ls_u = structure_terms(&mut tape, model, views, 0, &up.logits, users, None, hp.alpha)?;
    let mut ls = ls_u;
    if !items.is_empty() {
        let ip = model.group_pass(&mut tape, &vars, views, 1, &items)?;
        let mask: Vec<bool> = items.iter().map(|i| struct_items.binary_search(i).is_ok()).collect();
        if mask.iter().any(|&m| m) {
            let ls_i = structure_terms(&mut tape, model, views, 1, &ip.logits, &items, Some(&mask), hp.alpha)?;
            ls = tape.add(ls, ls_i)?;
        }
        let la = if instances.is_empty() {
            zero(&mut tape)
        } else {
            let upos: Vec<usize> = instances
                .iter()
                .map(|x| users.binary_search(&x.0).map_err(|_| Error::Invalid("instance user outside shard".into())))
                .collect::<Result<_>>()?;
            let ipos: Vec<usize> = instances.iter().map(|x| items.binary_search(&x.1).unwrap()).collect();
            let zu = tape.gather_rows(up.z, &upos)?;
            let zv = tape.gather_rows(ip.z, &ipos)?;
            let s = pair_scores_var(&mut tape, zu, zv)?;
            let labels: Vec<bool> = instances.iter().map(|x| x.2).collect();
            recommendation_loss_var(&mut tape, s, &labels, n_instances)?
        };
        return finish_shard(&mut tape, &vars, ls, la, hp.beta);
    }
    let la = zero(&mut tape);
    finish_shard(&mut tape, &vars, ls, la, hp.beta)
}

/// Loss and parameter gradients for one batch, split into `shards` pieces
/// whose gradients are added in shard order. Loss terms are scaled by
/// batch-wide counts, so the result is independent of the split up to
/// floating-point reassociation.
pub fn batch_gradients(
    model: &Model,
    views: &[ViewSeries],
    hp: &Hyperparams,
    batch: &Batch,
    shards: usize,
) -> Result<(BatchLoss, Grads)> {
    let results: Vec<Result<(BatchLoss, Grads)>> = match batch {
        Batch::Nodes { nodes, labels } => {
            let n_labeled = labels.iter().filter(|l| l.is_some()).count();
            let idx: Vec<usize> = (0..nodes.len()).collect();
            let parts = split_even(&idx, shards);
            parts
                .par_iter()
                .map(|p| {
                    let ns: Vec<usize> = p.iter().map(|&i| nodes[i]).collect();
                    let ls: Vec<Option<usize>> = p.iter().map(|&i| labels[i]).collect();
                    node_shard(model, views, hp, &ns, &ls, n_labeled)
                })
                .collect()
        }
        Batch::Pairs { users, instances } => {
            let mut sorted_users = users.clone();
            sorted_users.sort_unstable();
            sorted_users.dedup();
            let mut struct_items: Vec<usize> = instances.iter().map(|x| x.1).collect();
            struct_items.sort_unstable();
            struct_items.dedup();
            let user_parts = split_even(&sorted_users, shards);
            let item_parts = split_even(&struct_items, user_parts.len());
            let n = instances.len();
            user_parts
                .par_iter()
                .enumerate()
                .map(|(s, us)| {
                    let inst: Vec<_> = instances
                        .iter()
                        .filter(|x| us.binary_search(&x.0).is_ok())
                        .copied()
                        .collect();
                    let its = item_parts.get(s).map(Vec::as_slice).unwrap_or(&[]);
                    pair_shard(model, views, hp, us, &inst, its, n)
                })
                .collect()
        }
    };
    let mut loss = BatchLoss::default();
    let mut grads: Grads = vec![None; model.store.len()];
    for r in results {
        let (l, g) = r?;
        loss.structure += l.structure;
        loss.task += l.task;
        loss.total += l.total;
        add_into(&mut grads, g);
    }
    Ok((loss, grads))
}

/// Optimizer and bookkeeping state; enough to resume a run.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub adam: AdamState,
    pub epochs_done: usize,
    pub trace: Vec<EpochLoss>,
    pub best: ParamStore,
    pub best_metric: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub trace: Vec<EpochLoss>,
    pub best_epoch: usize,
    pub best_metric: f64,
    /// Parameters after the last epoch; the model holds the best ones.
    pub last: ParamStore,
}

pub struct Trainer<'a> {
    model: &'a mut Model,
    views: &'a [ViewSeries],
    sup: &'a Supervision,
    hp: Hyperparams,
    pub state: TrainState,
    pool: rayon::ThreadPool,
}

impl<'a> Trainer<'a> {
    pub fn new(model: &'a mut Model, views: &'a [ViewSeries], sup: &'a Supervision, hp: Hyperparams) -> Result<Self> {
        let state = TrainState {
            adam: AdamState::new(&model.store, hp.lr),
            epochs_done: 0,
            trace: Vec::new(),
            best: model.store.clone(),
            best_metric: f64::NEG_INFINITY,
            best_epoch: 0,
        };
        Trainer::resume(model, views, sup, hp, state)
    }

    pub fn resume(
        model: &'a mut Model,
        views: &'a [ViewSeries],
        sup: &'a Supervision,
        hp: Hyperparams,
        state: TrainState,
    ) -> Result<Self> {
        hp.validate()?;
        match (sup, model.groups.len(), model.head.is_some()) {
            (Supervision::Classification { .. }, 1, true) | (Supervision::Recommendation { .. }, 2, false) => {}
            _ => return Err(Error::Invalid("model layout does not fit the task".into())),
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(hp.workers)
            .build()
            .map_err(|e| Error::Invalid(format!("worker pool: {e}")))?;
        Ok(Trainer {
            model,
            views,
            sup,
            hp,
            state,
            pool,
        })
    }

    fn epoch_rng(&self, epoch: usize) -> SeededRng {
        let mut rng = seeded_rng(self.hp.seed);
        rng.set_stream(1 + epoch as u64);
        rng
    }

    /// Batches for one epoch, drawn from a generator that depends only on
    /// the seed and the epoch number.
    pub fn epoch_batches(&self, epoch: usize) -> Result<Vec<Batch>> {
        let mut rng = self.epoch_rng(epoch);
        let n = self.model.groups[0].n_nodes;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order
            .chunks(self.hp.batch_size)
            .map(|chunk| match self.sup {
                Supervision::Classification { labels, .. } => Ok(Batch::Nodes {
                    nodes: chunk.to_vec(),
                    labels: chunk.iter().map(|&i| labels[i]).collect(),
                }),
                Supervision::Recommendation {
                    positives,
                    known,
                    n_items,
                    ..
                } => {
                    let mut instances = Vec::new();
                    for &u in chunk {
                        for &i in &positives[u] {
                            instances.push((u, i, true));
                            for v in sample_negatives(&mut rng, *n_items, &known[u], self.hp.neg_per_pos)? {
                                instances.push((u, v, false));
                            }
                        }
                    }
                    Ok(Batch::Pairs {
                        users: chunk.to_vec(),
                        instances,
                    })
                }
            })
            .collect()
    }

    pub fn run_epoch(&mut self) -> Result<EpochLoss> {
        let epoch = self.state.epochs_done + 1;
        let batches = self.epoch_batches(epoch)?;
        let mut sum = BatchLoss::default();
        for batch in &batches {
            let (model, views, hp) = (&*self.model, self.views, &self.hp);
            let (loss, grads) = self
                .pool
                .install(|| batch_gradients(model, views, hp, batch, hp.workers))
                .map_err(|e| match e {
                    Error::NonFinite(_) => Error::Divergence {
                        epoch,
                        value: f64::NAN,
                    },
                    other => other,
                })?;
            if !loss.total.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    value: loss.total,
                });
            }
            self.state.adam.step(&mut self.model.store, &grads)?;
            sum.structure += loss.structure;
            sum.task += loss.task;
            sum.total += loss.total;
        }
        let nb = batches.len().max(1) as f64;
        let mut rec = EpochLoss {
            epoch,
            structure: sum.structure / nb,
            task: sum.task / nb,
            total: sum.total / nb,
            val_metric: f64::NAN,
        };
        if self.model.store.iter().any(|(_, v)| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::Divergence {
                epoch,
                value: rec.total,
            });
        }
        rec.val_metric = self.validation_metric(rec.total)?;
        if rec.val_metric > self.state.best_metric {
            self.state.best_metric = rec.val_metric;
            self.state.best_epoch = epoch;
            self.state.best = self.model.store.clone();
        }
        log::info!(
            "epoch {epoch}: L_structure {:.6} L_attention {:.6} L_all {:.6} val {:.4}",
            rec.structure,
            rec.task,
            rec.total,
            rec.val_metric
        );
        self.state.trace.push(rec);
        self.state.epochs_done = epoch;
        Ok(rec)
    }

    /// Accuracy on held-out labels or HR@10 on held-out pairs; without a
    /// validation set, the negated epoch loss.
    fn validation_metric(&self, epoch_loss: f64) -> Result<f64> {
        match self.sup {
            Supervision::Classification { val, .. } if !val.is_empty() => {
                let nodes: Vec<usize> = val.iter().map(|v| v.0).collect();
                let e = self.model.embed(self.views, 0, &nodes)?;
                let p = self.model.predict_proba(&e.z)?;
                let hits = val
                    .iter()
                    .zip(p.rows())
                    .filter(|((_, y), row)| argmax(row.as_slice().unwrap()) == *y)
                    .count();
                Ok(hits as f64 / val.len() as f64)
            }
            Supervision::Recommendation { val, val_negatives, .. } if !val.is_empty() => {
                let users = self.model.embed_all(self.views, 0)?.z;
                let items = self.model.embed_all(self.views, 1)?.z;
                let ranks: Vec<usize> = val
                    .iter()
                    .map(|&(u, i)| rank_of(&users, &items, u, i, &val_negatives[u]))
                    .collect();
                Ok(ranking_report(&ranks, &[10]).hr[0])
            }
            _ => Ok(-epoch_loss),
        }
    }

    pub fn params(&self) -> &ParamStore {
        &self.model.store
    }

    pub fn fit(&mut self) -> Result<()> {
        while self.state.epochs_done < self.hp.epochs {
            self.run_epoch()?;
        }
        Ok(())
    }

    /// Installs the best parameters in the model.
    pub fn finish(self) -> TrainReport {
        let last = std::mem::replace(&mut self.model.store, self.state.best);
        TrainReport {
            trace: self.state.trace,
            best_epoch: self.state.best_epoch,
            best_metric: self.state.best_metric,
            last,
        }
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Trains for `hp.epochs` epochs and leaves the best-validation parameters
/// in `model`.
pub fn train(model: &mut Model, views: &[ViewSeries], sup: &Supervision, hp: &Hyperparams) -> Result<TrainReport> {
    let mut t = Trainer::new(model, views, sup, hp.clone())?;
    t.fit()?;
    Ok(t.finish())
}

/// Loss trace as CSV.
pub fn trace_csv(trace: &[EpochLoss]) -> String {
    let mut s = String::from("epoch,L_structure,L_attention,L_all\n");
    for e in trace {
        s.push_str(&format!("{},{:e},{:e},{:e}\n", e.epoch, e.structure, e.task, e.total));
    }
    s
}
