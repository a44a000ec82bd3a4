//! Node classification and leave-one-out ranking metrics.

use ndarray::{Array2, Axis};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabelSet;
use crate::error::{Error, Result};
use crate::nn::{seeded_rng, AdamState, ParamStore, Tape};
use crate::objectives::{classification_loss_var, interaction_score};
use crate::trainer::argmax;

pub const RANK_CUTOFFS: [usize; 4] = [5, 10, 15, 20];
pub const TRAIN_FRACTIONS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
pub const REPETITIONS: usize = 10;
pub const CLASSIFIER_NAME: &str = "multinomial-logistic";

/// Averaged over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub train_fraction: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub repetitions: usize,
    pub classifier: String,
}

/// Micro- and macro-F1 plus per-class precision and recall. Macro-F1
/// averages over classes that occur in either `truth` or `pred`.
pub fn f1_scores(truth: &[usize], pred: &[usize], n_classes: usize) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    for (&t, &p) in truth.iter().zip(pred) {
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let total_tp: usize = tp.iter().sum();
    let micro = ratio(2 * total_tp, 2 * total_tp + fp.iter().sum::<usize>() + fn_.iter().sum::<usize>());
    let present: Vec<usize> = (0..n_classes).filter(|&c| tp[c] + fp[c] + fn_[c] > 0).collect();
    let macro_ = if present.is_empty() {
        0.0
    } else {
        present
            .iter()
            .map(|&c| ratio(2 * tp[c], 2 * tp[c] + fp[c] + fn_[c]))
            .sum::<f64>()
            / present.len() as f64
    };
    let precision = (0..n_classes).map(|c| ratio(tp[c], tp[c] + fp[c])).collect();
    let recall = (0..n_classes).map(|c| ratio(tp[c], tp[c] + fn_[c])).collect();
    (micro, macro_, precision, recall)
}

/// Softmax regression on fixed features, fitted by full-batch Adam from
/// zero weights.
#[derive(Debug, Clone)]
pub struct LogisticHead {
    pub w: Array2<f64>,
    pub b: Array2<f64>,
}

impl LogisticHead {
    pub const STEPS: usize = 300;
    pub const LR: f64 = 0.05;

    pub fn fit(x: &Array2<f64>, y: &[usize], n_classes: usize) -> Result<Self> {
        let mut store = ParamStore::new();
        let wid = store.add("w", Array2::zeros((x.ncols(), n_classes)));
        let bid = store.add("b", Array2::zeros((1, n_classes)));
        let mut adam = AdamState::new(&store, Self::LR);
        for _ in 0..Self::STEPS {
            let mut tape = Tape::new();
            let w = tape.param(store.get(wid).clone());
            let b = tape.param(store.get(bid).clone());
            let xv = tape.constant(x.clone());
            let m = tape.matmul(xv, w)?;
            let logits = tape.add_row(m, b)?;
            let loss = classification_loss_var(&mut tape, logits, y, y.len())?;
            let mut g = tape.backward(loss)?;
            adam.step(&mut store, &[g.take(w), g.take(b)])?;
        }
        Ok(LogisticHead {
            w: store.get(wid).clone(),
            b: store.get(bid).clone(),
        })
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<usize> {
        let logits = x.dot(&self.w) + &self.b;
        logits
            .axis_iter(Axis(0))
            .map(|r| argmax(r.as_slice().expect("standard layout")))
            .collect()
    }
}

/// Trains the logistic head on a random `train_fraction` of the labeled
/// rows of `embeddings` and scores the rest, averaged over `repetitions`
/// splits. Splits missing a class are redrawn.
pub fn classify_eval(
    embeddings: &Array2<f64>,
    labels: &LabelSet,
    train_fraction: f64,
    seed: u64,
    repetitions: usize,
) -> Result<ClassificationReport> {
    let c = labels.n_classes();
    let present: std::collections::BTreeSet<usize> = labels.classes.iter().copied().collect();
    if present.len() < 2 {
        return Err(Error::Data("classification needs at least two classes".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Invalid(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    if let Some(&bad) = labels.nodes.iter().find(|&&n| n >= embeddings.nrows()) {
        return Err(Error::Invalid(format!("labeled node {bad} has no embedding")));
    }
    let n = labels.len();
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = seeded_rng(seed);
    let mut splits = Vec::with_capacity(repetitions);
    for rep in 0..repetitions {
        let mut tries = 0;
        loop {
            let mut train = sample(&mut rng, n, n_train).into_vec();
            train.sort_unstable();
            let covered: std::collections::BTreeSet<usize> = train.iter().map(|&p| labels.classes[p]).collect();
            if covered == present {
                splits.push(train);
                break;
            }
            tries += 1;
            log::warn!("repetition {rep}: train split misses a class, resampling");
            if tries >= 1000 {
                return Err(Error::Data(format!(
                    "cannot draw a train split of {n_train} covering all {} classes",
                    present.len()
                )));
            }
        }
    }
    let results: Vec<Result<(f64, f64, Vec<f64>, Vec<f64>)>> = splits
        .par_iter()
        .map(|train| {
            let mut is_train = vec![false; n];
            for &p in train {
                is_train[p] = true;
            }
            let test: Vec<usize> = (0..n).filter(|&p| !is_train[p]).collect();
            let rows = |ps: &[usize]| embeddings.select(Axis(0), &ps.iter().map(|&p| labels.nodes[p]).collect::<Vec<_>>());
            let ys = |ps: &[usize]| ps.iter().map(|&p| labels.classes[p]).collect::<Vec<_>>();
            let head = LogisticHead::fit(&rows(train), &ys(train), c)?;
            let pred = head.predict(&rows(&test));
            Ok(f1_scores(&ys(&test), &pred, c))
        })
        .collect();
    let mut micro = 0.0;
    let mut macro_ = 0.0;
    let mut precision = vec![0.0; c];
    let mut recall = vec![0.0; c];
    for r in results {
        let (mi, ma, p, rc) = r?;
        micro += mi;
        macro_ += ma;
        for k in 0..c {
            precision[k] += p[k];
            recall[k] += rc[k];
        }
    }
    let reps = repetitions.max(1) as f64;
    Ok(ClassificationReport {
        train_fraction,
        micro_f1: micro / reps,
        macro_f1: macro_ / reps,
        precision: precision.into_iter().map(|x| x / reps).collect(),
        recall: recall.into_iter().map(|x| x / reps).collect(),
        repetitions,
        classifier: CLASSIFIER_NAME.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub ks: Vec<usize>,
    pub hr: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub n_users: usize,
}

impl RankingReport {
    pub fn hr_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|p| self.hr[p])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|p| self.ndcg[p])
    }

    pub fn csv_header(&self) -> String {
        let hr = self.ks.iter().map(|k| format!("HR@{k}"));
        let nd = self.ks.iter().map(|k| format!("NDCG@{k}"));
        hr.chain(nd).collect::<Vec<_>>().join(",")
    }

    pub fn csv_row(&self) -> String {
        self.hr
            .iter()
            .chain(&self.ndcg)
            .map(|v| format!("{v:.6}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", self.csv_header(), self.csv_row())
    }
}

/// 1-based position of `item` among `item` and `negatives` for user `u`,
/// by descending interaction score, ties going to the lower item index.
pub fn rank_of(users: &Array2<f64>, items: &Array2<f64>, u: usize, item: usize, negatives: &[usize]) -> usize {
    let score = |i: usize| {
        interaction_score(
            users.row(u).as_slice().expect("standard layout"),
            items.row(i).as_slice().expect("standard layout"),
        )
        .expect("equal dims")
    };
    let s = score(item);
    1 + negatives
        .iter()
        .filter(|&&n| {
            let sn = score(n);
            sn > s || (sn == s && n < item)
        })
        .count()
}

pub fn ranking_report(ranks: &[usize], ks: &[usize]) -> RankingReport {
    let n = ranks.len().max(1) as f64;
    let hr = ks
        .iter()
        .map(|&k| ranks.iter().filter(|&&r| r <= k).count() as f64 / n)
        .collect();
    let ndcg = ks
        .iter()
        .map(|&k| {
            ranks
                .iter()
                .filter(|&&r| r <= k)
                .map(|&r| 1.0 / ((r + 1) as f64).log2())
                .sum::<f64>()
                / n
        })
        .collect();
    RankingReport {
        ks: ks.to_vec(),
        hr,
        ndcg,
        n_users: ranks.len(),
    }
}

/// Leave-one-out ranking of each `(user, item)` test pair against the
/// user's shared negatives.
pub fn rank_eval(
    users: &Array2<f64>,
    items: &Array2<f64>,
    test: &[(usize, usize)],
    negatives: &[Vec<usize>],
    ks: &[usize],
) -> Result<RankingReport> {
    if users.ncols() != items.ncols() {
        return Err(Error::shape(
            "rank_eval",
            format!("user dim {} vs item dim {}", users.ncols(), items.ncols()),
        ));
    }
    for &(u, i) in test {
        if u >= users.nrows() || u >= negatives.len() {
            return Err(Error::Invalid(format!("user {u} has no embedding or negatives")));
        }
        if i >= items.nrows() || negatives[u].iter().any(|&n| n >= items.nrows()) {
            return Err(Error::Invalid(format!("item of user {u} has no embedding")));
        }
    }
    let ranks: Vec<usize> = test
        .par_iter()
        .map(|&(u, i)| rank_of(users, items, u, i, &negatives[u]))
        .collect();
    Ok(ranking_report(&ranks, ks))
}

/// Fixed-width table with a header row.
pub fn text_table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width = header.iter().map(String::len).collect::<Vec<_>>();
    for r in rows {
        for (c, v) in r.iter().enumerate().take(cols) {
            width[c] = width[c].max(v.len());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .enumerate()
            .map(|(c, v)| format!("{v:>w$}", w = width[c]))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&width.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rank_three_case() {
        let users = array![[1.0]];
        let items = array![[0.5], [3.0], [2.0], [-1.0], [0.1]];
        // Positive item 0 scores σ(0.5); items 1 and 2 outrank it.
        let r = rank_eval(&users, &items, &[(0, 0)], &[vec![1, 2, 3, 4]], &RANK_CUTOFFS).unwrap();
        assert_eq!(rank_of(&users, &items, 0, 0, &[1, 2, 3, 4]), 3);
        assert_eq!(r.hr_at(5), Some(1.0));
        assert!((r.ndcg_at(5).unwrap() - 0.5).abs() < 1e-15);
        let r2 = ranking_report(&[3], &[2]);
        assert_eq!(r2.hr[0], 0.0);
    }

    #[test]
    fn ties_break_on_item_index() {
        let users = array![[1.0]];
        let items = array![[1.0], [1.0], [1.0]];
        assert_eq!(rank_of(&users, &items, 0, 1, &[0, 2]), 2);
        assert_eq!(rank_of(&users, &items, 0, 0, &[1, 2]), 1);
    }

    #[test]
    fn hand_confusion_matrix() {
        // truth 0 0 1 1, pred 0 1 1 1: class 0 F1 = 2/3, class 1 F1 = 4/5.
        let (micro, macro_, p, r) = f1_scores(&[0, 0, 1, 1], &[0, 1, 1, 1], 2);
        assert!((micro - 0.75).abs() < 1e-15);
        assert!((macro_ - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-15);
        assert_eq!(p, vec![1.0, 2.0 / 3.0]);
        assert_eq!(r, vec![0.5, 1.0]);
    }

    #[test]
    fn separable_embeddings_score_one() {
        let n = 40;
        let emb = Array2::from_shape_fn((n, 2), |(i, j)| if (i % 2) == j { 3.0 } else { -3.0 });
        let labels = LabelSet {
            node_type: 0,
            nodes: (0..n).collect(),
            classes: (0..n).map(|i| i % 2).collect(),
            class_names: vec!["a".into(), "b".into()],
        };
        let r = classify_eval(&emb, &labels, 0.5, 3, 4).unwrap();
        assert_eq!((r.micro_f1, r.macro_f1), (1.0, 1.0));
        let single = LabelSet {
            classes: vec![0; n],
            ..labels
        };
        assert!(classify_eval(&emb, &single, 0.5, 3, 4).is_err());
    }

    #[test]
    fn table_aligns() {
        let t = text_table(&["a".into(), "bbb".into()], &[vec!["10".into(), "2".into()]]);
        assert_eq!(t, " a  bbb\n--  ---\n10    2\n");
    }
}
