//! Threshold-based verification: k-fold accuracy and the ROC sweep.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KFoldResult {
    pub fold_accuracies: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub mean_accuracy: f64,
}

/// One operating point: everything scoring `>= threshold` is accepted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub tar: f64,
}

fn check_scores(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::shape(
            "verification",
            format!("{} scores but {} labels", scores.len(), labels.len()),
        ));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::contract(format!("score {i} is not finite")));
    }
    Ok(())
}

/// Candidate thresholds for `scores`: one below the minimum, the midpoint of
/// every pair of consecutive distinct values, one above the maximum.
/// Ascending.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let Some((&lo, &hi)) = sorted.first().zip(sorted.last()) else {
        return vec![0.0];
    };
    let mut out = Vec::with_capacity(sorted.len() + 1);
    out.push(lo - 1.0);
    out.extend(sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.push(hi + 1.0);
    out
}

/// Threshold maximizing the number of correct same/different decisions on
/// `scores`, lowest threshold on ties.
pub fn best_threshold(scores: &[f64], labels: &[bool]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let candidates = candidate_thresholds(scores);

    // Below every score: all accepted, so exactly the positives are right.
    let mut correct = labels.iter().filter(|&&same| same).count() as i64;
    let mut best = (correct, candidates[0]);
    let mut next = 0;
    for &t in &candidates[1..] {
        while next < order.len() && scores[order[next]] < t {
            correct += if labels[order[next]] { -1 } else { 1 };
            next += 1;
        }
        if correct > best.0 {
            best = (correct, t);
        }
    }
    best.1
}

/// `k` contiguous folds; each fold is scored with the threshold fit on the
/// other `k − 1`.
pub fn kfold_accuracy(scores: &[f64], labels: &[bool], k: usize) -> Result<KFoldResult> {
    check_scores(scores, labels)?;
    if k < 2 || scores.len() < k || scores.len() % k != 0 {
        return Err(Error::contract(format!(
            "{} scores cannot be split into {k} equal folds (need k >= 2)",
            scores.len()
        )));
    }
    let size = scores.len() / k;
    let mut fold_accuracies = Vec::with_capacity(k);
    let mut thresholds = Vec::with_capacity(k);
    for f in 0..k {
        let held = f * size..(f + 1) * size;
        let (train_s, train_l): (Vec<f64>, Vec<bool>) = (0..scores.len())
            .filter(|i| !held.contains(i))
            .map(|i| (scores[i], labels[i]))
            .unzip();
        let t = best_threshold(&train_s, &train_l);
        let correct = held
            .clone()
            .filter(|&i| (scores[i] >= t) == labels[i])
            .count();
        fold_accuracies.push(correct as f64 / size as f64);
        thresholds.push(t);
    }
    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / k as f64;
    Ok(KFoldResult {
        fold_accuracies,
        thresholds,
        mean_accuracy,
    })
}

/// Operating points at every distinct score, strictest threshold first, so
/// far and tar are both non-decreasing along the sequence.
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    check_scores(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::contract("ROC needs both genuine and impostor scores"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            far: fp as f64 / negatives as f64,
            tar: tp as f64 / positives as f64,
        });
    }
    Ok(points)
}

/// True accept rate at the loosest threshold whose false accept rate does
/// not exceed `far_level`; 0 when no threshold qualifies.
pub fn tar_at_far(points: &[RocPoint], far_level: f64) -> f64 {
    points
        .iter()
        .filter(|p| p.far <= far_level)
        .map(|p| p.tar)
        .fold(0.0, f64::max)
}
