//! Loss terms, on arrays and on the tape, and negative sampling.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Tape, Var};
use crate::views::Proximity;

pub const DEFAULT_ALPHA: f64 = 10.0;
pub const DEFAULT_BETA: f64 = 1.0;

/// Target rows for the reconstruction loss: the proximity rows of `nodes`
/// renormalized to sum 1 (all-zero rows stay zero), already multiplied by
/// the penalty `alpha` on their support.
pub fn weighted_targets(prox: &Proximity, nodes: &[usize], alpha: f64) -> Array2<f64> {
    let mut t = prox.gather_rows(nodes);
    for mut row in t.rows_mut() {
        let s = row.sum();
        if s > 0.0 {
            row.mapv_inplace(|x| if x > 0.0 { alpha * x / s } else { 0.0 });
        }
    }
    t
}

/// `−Σ weighted ⊙ log_softmax(logits)` on the tape.
pub fn structure_loss_var(tape: &mut Tape, logits: Var, weighted: Array2<f64>) -> Result<Var> {
    let lp = tape.log_softmax_row(logits)?;
    let w = tape.constant(weighted);
    let prod = tape.hadamard(lp, w)?;
    let s = tape.sum(prod)?;
    tape.scale(s, -1.0)
}

/// Mean cross-entropy of `logits` against `labels`, scaled by
/// `1 / denom` instead of `1 / rows` so shards of one batch add up.
pub fn classification_loss_var(tape: &mut Tape, logits: Var, labels: &[usize], denom: usize) -> Result<Var> {
    let (rows, c) = tape.shape(logits);
    if rows != labels.len() {
        return Err(Error::shape("classification_loss", format!("{rows} rows, {} labels", labels.len())));
    }
    let mut onehot = Array2::zeros((rows, c));
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::Invalid(format!("label {y} outside {c} classes")));
        }
        onehot[[i, y]] = 1.0;
    }
    let lp = tape.log_softmax_row(logits)?;
    let oh = tape.constant(onehot);
    let prod = tape.hadamard(lp, oh)?;
    let s = tape.sum(prod)?;
    tape.scale(s, -1.0 / denom as f64)
}

/// Binary cross-entropy of raw scores `s` (`n×1`, pre-sigmoid) against
/// `labels`, scaled by `1 / denom`.
pub fn recommendation_loss_var(tape: &mut Tape, scores: Var, labels: &[bool], denom: usize) -> Result<Var> {
    let (rows, _) = tape.shape(scores);
    if rows != labels.len() {
        return Err(Error::shape("recommendation_loss", format!("{rows} scores, {} labels", labels.len())));
    }
    let signs = Array2::from_shape_fn((rows, 1), |(i, _)| if labels[i] { 1.0 } else { -1.0 });
    let sg = tape.constant(signs);
    let signed = tape.hadamard(scores, sg)?;
    let ll = tape.log_sigmoid(signed)?;
    let s = tape.sum(ll)?;
    tape.scale(s, -1.0 / denom as f64)
}

/// Dot products `z_u[i] · z_v[i]` as an `n×1` column.
pub fn pair_scores_var(tape: &mut Tape, zu: Var, zv: Var) -> Result<Var> {
    let p = tape.hadamard(zu, zv)?;
    tape.sum_rows(p)
}

/// `−Σ_i Σ_j Z(i,j) · target(i,j) · log recon(i,j)` with `0 · log x = 0`
/// and `Z = alpha` where the target is positive, else 1.
pub fn structure_loss_view(recon: &Array2<f64>, target: &Array2<f64>, alpha: f64) -> Result<f64> {
    if recon.dim() != target.dim() {
        return Err(Error::shape(
            "structure_loss",
            format!("recon {:?}, target {:?}", recon.dim(), target.dim()),
        ));
    }
    let mut loss = 0.0;
    for (&r, &t) in recon.iter().zip(target) {
        if t > 0.0 {
            if r <= 0.0 {
                return Err(Error::NonFinite("structure_loss"));
            }
            loss -= alpha * t * r.ln();
        }
    }
    Ok(loss)
}

pub fn structure_loss_total(per_view: &[f64]) -> f64 {
    per_view.iter().sum()
}

/// Mean cross-entropy of class `probs` rows against `labels`.
pub fn classification_loss(probs: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Invalid("empty label set".into()));
    }
    if probs.nrows() != labels.len() {
        return Err(Error::shape(
            "classification_loss",
            format!("{} rows, {} labels", probs.nrows(), labels.len()),
        ));
    }
    let mut sum = 0.0;
    for (row, &y) in probs.rows().into_iter().zip(labels) {
        let p = *row
            .get(y)
            .ok_or_else(|| Error::Invalid(format!("label {y} outside {} classes", row.len())))?;
        sum -= p.ln();
    }
    Ok(sum / labels.len() as f64)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Interaction probability `σ(z_u · z_v)`.
pub fn interaction_score(zu: &[f64], zv: &[f64]) -> Result<f64> {
    if zu.len() != zv.len() {
        return Err(Error::shape("interaction_score", format!("{} vs {}", zu.len(), zv.len())));
    }
    Ok(sigmoid(zu.iter().zip(zv).map(|(a, b)| a * b).sum()))
}

/// Mean binary cross-entropy of probabilities against labels.
pub fn recommendation_loss(probs: &[f64], labels: &[bool]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::Invalid("empty instance set".into()));
    }
    if probs.len() != labels.len() {
        return Err(Error::shape(
            "recommendation_loss",
            format!("{} scores, {} labels", probs.len(), labels.len()),
        ));
    }
    let sum: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| if y { -p.ln() } else { -(1.0 - p).ln() })
        .sum();
    Ok(sum / probs.len() as f64)
}

pub fn total_loss(structure: f64, task: f64, beta: f64) -> f64 {
    structure + beta * task
}

/// Draws `n` distinct items from `0..n_items` avoiding the sorted list
/// `exclude`, uniformly without replacement. The result is sorted.
pub fn sample_negatives<R: Rng + ?Sized>(
    rng: &mut R,
    n_items: usize,
    exclude: &[usize],
    n: usize,
) -> Result<Vec<usize>> {
    debug_assert!(exclude.windows(2).all(|w| w[0] < w[1]));
    let excluded = exclude.iter().filter(|&&e| e < n_items).count();
    let space = n_items - excluded;
    if space < n {
        return Err(Error::Data(format!(
            "only {space} candidate negatives, {n} requested"
        )));
    }
    // Draw ranks in the candidate space, then map rank -> item by skipping
    // excluded items.
    let mut ranks = sample(rng, space, n).into_vec();
    ranks.sort_unstable();
    let mut out = Vec::with_capacity(n);
    let mut ex = exclude.iter().peekable();
    let mut skipped = 0;
    for r in ranks {
        let mut item = r + skipped;
        while let Some(&&e) = ex.peek() {
            if e <= item {
                skipped += 1;
                item += 1;
                ex.next();
            } else {
                break;
            }
        }
        out.push(item);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::seeded_rng;
    use ndarray::array;

    #[test]
    fn two_by_two_structure_loss() {
        let recon = array![[0.5, 0.5], [0.5, 0.5]];
        let target = array![[1.0, 0.0], [0.0, 1.0]];
        let l = structure_loss_view(&recon, &target, 10.0).unwrap();
        assert!((l - 20.0 * 2f64.ln()).abs() < 1e-12);
        assert!((l - 13.863).abs() < 1e-3);
        let zero = structure_loss_view(&recon, &array![[0.0, 0.0], [0.0, 0.0]], 10.0).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn tape_matches_array_structure_loss() {
        let logits = array![[0.3, -1.0, 2.0], [0.0, 0.0, 0.0]];
        let prox = Proximity::Dense(array![[1.0, 0.5, 0.0], [0.0, 0.0, 0.0], [0.0, 1.0, 1.0]]);
        let w = weighted_targets(&prox, &[0, 2], 10.0);
        let mut tape = Tape::new();
        let l = tape.param(logits.clone());
        let loss = structure_loss_var(&mut tape, l, w).unwrap();
        let mut recon = logits.clone();
        for mut row in recon.rows_mut() {
            let z: f64 = row.iter().map(|x| x.exp()).sum();
            row.mapv_inplace(|x| x.exp() / z);
        }
        let target = array![[2.0 / 3.0, 1.0 / 3.0, 0.0], [0.0, 0.5, 0.5]];
        let expected = structure_loss_view(&recon, &target, 10.0).unwrap();
        assert!((tape.scalar(loss) - expected).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_oracles() {
        assert_eq!(interaction_score(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.5);
        let s = interaction_score(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!((s - 1.0 / (1.0 + (-2f64).exp())).abs() < 1e-15);
        assert!((s - 0.8808).abs() < 1e-4);
        assert!(interaction_score(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn recommendation_and_classification_oracles() {
        let l = recommendation_loss(&[0.5, 0.5, 0.5], &[true, false, true]).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert!(recommendation_loss(&[], &[]).is_err());
        let c = classification_loss(&array![[0.5, 0.5], [0.5, 0.5]], &[0, 1]).unwrap();
        assert!((c - 2f64.ln()).abs() < 1e-15);
        assert!(classification_loss(&Array2::zeros((0, 2)), &[]).is_err());
        assert_eq!(total_loss(2.0, 3.0, 1.0), 5.0);
        assert_eq!(total_loss(2.0, 3.0, 0.0), 2.0);
        assert_eq!(structure_loss_total(&[1.0, 2.5]), 3.5);
    }

    #[test]
    fn negatives_avoid_exclusions() {
        let mut rng = seeded_rng(4);
        for n_items in 1..12 {
            for mask in 0u32..(1 << n_items) {
                let exclude: Vec<usize> = (0..n_items).filter(|i| mask & (1 << i) != 0).collect();
                let space = n_items - exclude.len();
                for n in 0..=space {
                    let got = sample_negatives(&mut rng, n_items, &exclude, n).unwrap();
                    assert_eq!(got.len(), n);
                    assert!(got.windows(2).all(|w| w[0] < w[1]));
                    assert!(got.iter().all(|g| *g < n_items && !exclude.contains(g)));
                }
                assert!(sample_negatives(&mut rng, n_items, &exclude, space + 1).is_err());
            }
        }
    }

    #[test]
    fn negatives_deterministic() {
        let a = sample_negatives(&mut seeded_rng(1), 500, &[3, 9], 99).unwrap();
        let b = sample_negatives(&mut seeded_rng(1), 500, &[3, 9], 99).unwrap();
        assert_eq!(a, b);
    }
}
