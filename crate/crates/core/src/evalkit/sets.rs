//! Set-to-set similarity for videos and templates.

use crate::dataio::{PairList, TemplateSet};
use crate::error::{Error, Result};
use crate::numcore::{cosine_matrix, Matrix};

pub const DEFAULT_FRAME_PAIRS: usize = 100;
pub const DEFAULT_BETA: f64 = 10.0;

/// Mean cosine over frame pairs `(i mod |A|, i mod |B|)` for
/// `i < min(n, |A|·|B|)`.
pub fn video_pair_score(frames_a: &Matrix, frames_b: &Matrix, n: usize) -> Result<f64> {
    if frames_a.rows() == 0 || frames_b.rows() == 0 || n == 0 {
        return Err(Error::contract("video scoring needs frames on both sides and n >= 1"));
    }
    let cos = cosine_matrix(frames_a, &frames_b.transpose())?;
    let count = n.min(frames_a.rows().saturating_mul(frames_b.rows()));
    let total: f64 = (0..count)
        .map(|i| cos.get(i % frames_a.rows(), i % frames_b.rows()))
        .sum();
    Ok(total / count as f64)
}

/// Softmax-weighted mean of all pairwise scores: `Σ s·e^{βs} / Σ e^{βs}`.
pub fn template_pool_softmax(scores: &Matrix, beta: f64) -> Result<f64> {
    if scores.as_slice().is_empty() {
        return Err(Error::contract("template pooling needs at least one score"));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::contract(format!("beta must be >= 0, got {beta}")));
    }
    let top = scores.as_slice().iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let (mut num, mut den) = (0.0, 0.0);
    for &s in scores.as_slice() {
        let w = (beta * (s - top)).exp();
        num += s * w;
        den += w;
    }
    Ok(num / den)
}

fn members(features: &Matrix, set: &TemplateSet, id: usize) -> Result<Matrix> {
    let t = u32::try_from(id)
        .ok()
        .and_then(|id| set.templates.get(&id))
        .ok_or_else(|| Error::contract(format!("unknown template {id}")))?;
    if let Some(&bad) = t.samples.iter().find(|&&i| i >= features.rows()) {
        return Err(Error::contract(format!(
            "template {id} references sample {bad}, have {}",
            features.rows()
        )));
    }
    Ok(features.select_rows(&t.samples))
}

/// Softmax-pooled score for every template pair.
pub fn template_pair_scores(features: &Matrix, set: &TemplateSet, pairs: &PairList, beta: f64) -> Result<Vec<f64>> {
    pairs
        .entries
        .iter()
        .map(|p| {
            let a = members(features, set, p.a)?;
            let b = members(features, set, p.b)?;
            template_pool_softmax(&cosine_matrix(&a, &b.transpose())?, beta)
        })
        .collect()
}

/// Frame-averaged score for every video pair; each template is one video.
pub fn video_pair_scores(features: &Matrix, set: &TemplateSet, pairs: &PairList, n: usize) -> Result<Vec<f64>> {
    pairs
        .entries
        .iter()
        .map(|p| video_pair_score(&members(features, set, p.a)?, &members(features, set, p.b)?, n))
        .collect()
}
