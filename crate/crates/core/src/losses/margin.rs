use super::geometry::CosineGeometry;
use super::{check_inputs, intra_cosines, mean, ClassHead, FeatureBatch, LossOutput};
use crate::error::{Error, Result};
use crate::numcore::{cosine_matrix, matmul, Matrix};

/// Number of entries kept when a fraction `p` of `count` sorted similarities
/// is selected: `p·count` rounded half up, clamped to `[1, count]`.
pub fn select_count(p: f64, count: usize) -> usize {
    if count == 0 {
        return 0;
    }
    let k = (p * count as f64 + 0.5).floor();
    (k.max(1.0) as usize).min(count)
}

/// `1` for every sample whose highest-scoring class differs from its label.
/// Ties go to the lowest class index.
pub fn hard_mask_from_logits(logits: &Matrix, labels: &[usize]) -> Vec<u8> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let row = logits.row(i);
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            u8::from(best != y)
        })
        .collect()
}

/// Misclassification indicator of the plain softmax classifier `Wᵀx`.
pub fn hard_mask(batch: &FeatureBatch, head: &ClassHead) -> Result<Vec<u8>> {
    check_inputs("hard_mask", batch, head)?;
    let logits = matmul(&batch.features, &head.weights)?;
    Ok(hard_mask_from_logits(&logits, &batch.labels))
}

/// `(1/M) Σ w_i·{α_i − cos(W_{y_i}, x_i)}₊` with a per-sample margin `α_i`
/// and an optional 0/1 sample mask `w_i`.
pub fn margin_hinge(
    batch: &FeatureBatch,
    head: &ClassHead,
    sample_margins: &[f64],
    mask: Option<&[u8]>,
) -> Result<LossOutput> {
    check_inputs("margin_hinge", batch, head)?;
    if sample_margins.len() != batch.len() || mask.is_some_and(|m| m.len() != batch.len()) {
        return Err(Error::shape(
            "margin_hinge",
            "per-sample margins and mask must have one entry per sample",
        ));
    }
    let geo = CosineGeometry::new(&batch.features, &head.weights)?;
    let m = batch.len();
    let inv_m = 1.0 / m.max(1) as f64;
    let mut grad_cos = Matrix::zeros(m, head.classes());
    let mut total = 0.0;
    let mut active = 0;
    for (i, &y) in batch.labels.iter().enumerate() {
        if mask.is_some_and(|mk| mk[i] == 0) {
            continue;
        }
        let gap = sample_margins[i] - geo.cos.get(i, y);
        if gap > 0.0 {
            total += gap;
            active += 1;
            grad_cos.set(i, y, -inv_m);
        }
    }
    let (grad_features, grad_weights) = geo.backward(&grad_cos);

    let mut out = LossOutput::zeros(batch, head);
    out.loss = total * inv_m;
    out.grad_features = grad_features;
    out.grad_weights = grad_weights;
    out.diagnostics.violation_count = active;
    out.diagnostics.mean_intra_cosine = mean(&intra_cosines(&geo.cos, &batch.labels));
    Ok(out)
}

/// Intra-class cosine hinge with one fixed margin for every sample.
pub fn lmc_term(batch: &FeatureBatch, head: &ClassHead, alpha: f64) -> Result<LossOutput> {
    margin_hinge(batch, head, &vec![alpha; batch.len()], None)
}

/// Recomputes the per-class margins from the current batch and stores them
/// in `head.margins`.
///
/// For each class present in the batch, its intra-class cosines are sorted in
/// descending order, the top `k = select_count(p, count)` are summed and the
/// margin becomes `max(alpha0, sum / (1 + k))`. Absent classes keep their
/// previous margin.
pub fn adaptive_margins(
    batch: &FeatureBatch,
    head: &mut ClassHead,
    alpha0: f64,
    p: f64,
) -> Result<Vec<f64>> {
    check_inputs("adaptive_margins", batch, head)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::contract(format!("p must lie in (0, 1], got {p}")));
    }
    let cos = cosine_matrix(&batch.features, &head.weights)?;
    let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); head.classes()];
    for (c, &y) in intra_cosines(&cos, &batch.labels).into_iter().zip(&batch.labels) {
        per_class[y].push(c);
    }
    for (margin, mut sims) in head.margins.iter_mut().zip(per_class) {
        if sims.is_empty() {
            continue;
        }
        sims.sort_unstable_by(|a, b| b.total_cmp(a));
        let k = select_count(p, sims.len());
        let top: f64 = sims.iter().take(k).sum();
        *margin = alpha0.max(top / (1 + k) as f64);
    }
    Ok(head.margins.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    /// Features whose cosine with class-0 weight `[1, 0]` are exactly `cosines`.
    fn batch_with_cosines(cosines: &[f64]) -> (FeatureBatch, ClassHead) {
        let rows: Vec<Vec<f64>> = cosines
            .iter()
            .map(|&c| vec![c, (1.0 - c * c).sqrt()])
            .collect();
        let batch = FeatureBatch::new(Matrix::from_rows(&rows).unwrap(), vec![0; cosines.len()]).unwrap();
        let head = ClassHead::new(Matrix::identity(2), vec![0.2, 0.45], 1.0).unwrap();
        (batch, head)
    }

    #[test]
    fn select_count_rounds_half_up() {
        assert_eq!(select_count(0.6, 3), 2);
        assert_eq!(select_count(0.5, 3), 2);
        assert_eq!(select_count(0.6, 1), 1);
        assert_eq!(select_count(0.01, 10), 1);
        assert_eq!(select_count(1.0, 7), 7);
        assert_eq!(select_count(0.25, 2), 1);
    }

    #[test]
    fn hinge_boundary_and_arithmetic() {
        let (batch, head) = batch_with_cosines(&[0.5]);
        let out = lmc_term(&batch, &head, 0.5).unwrap();
        assert!(out.loss.abs() < 1e-15);
        assert_eq!(out.grad_features.frobenius_norm(), 0.0);

        let (batch, head) = batch_with_cosines(&[0.2]);
        let out = lmc_term(&batch, &head, 0.5).unwrap();
        assert!((out.loss - 0.3).abs() < 1e-12);
        assert_eq!(out.diagnostics.violation_count, 1);
    }

    #[test]
    fn hard_mask_cases() {
        let logits = Matrix::new(3, 2, vec![2.0, 0.0, 2.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(hard_mask_from_logits(&logits, &[0, 1, 1]), vec![0, 1, 1]);
        assert_eq!(hard_mask_from_logits(&logits, &[0, 0, 0]), vec![0, 0, 0]);
    }

    #[test]
    fn hard_mask_from_batch() {
        let batch = FeatureBatch::new(Matrix::new(1, 2, vec![1.0, 0.0]).unwrap(), vec![1]).unwrap();
        let head = ClassHead::new(Matrix::new(2, 2, vec![2.0, 0.0, 0.0, 0.0]).unwrap(), vec![0.0; 2], 1.0).unwrap();
        assert_eq!(hard_mask(&batch, &head).unwrap(), vec![1]);
    }

    #[test]
    fn hard_mask_invariant_to_per_sample_shift() {
        let mut rng = Rng::new(8);
        for _ in 0..50 {
            let logits = Matrix::from_fn(6, 5, |_, _| rng.normal());
            let labels: Vec<usize> = (0..6).map(|_| rng.below(5)).collect();
            let shifts: Vec<f64> = (0..6).map(|_| rng.normal() * 10.0).collect();
            let shifted = Matrix::from_fn(6, 5, |i, j| logits.get(i, j) + shifts[i]);
            assert_eq!(
                hard_mask_from_logits(&logits, &labels),
                hard_mask_from_logits(&shifted, &labels)
            );
        }
    }

    #[test]
    fn adaptive_margin_hand_cases() {
        let (batch, mut head) = batch_with_cosines(&[0.3, 0.9, 0.6]);
        let m = adaptive_margins(&batch, &mut head, 0.2, 0.6).unwrap();
        assert!((m[0] - 0.5).abs() < 1e-12);
        // class 1 absent: untouched
        assert_eq!(m[1], 0.45);
        assert_eq!(head.margins, m);

        let (batch, mut head) = batch_with_cosines(&[0.1]);
        let m = adaptive_margins(&batch, &mut head, 0.2, 0.6).unwrap();
        assert_eq!(m[0], 0.2);
    }

    #[test]
    fn adaptive_margin_rejects_bad_p() {
        let (batch, mut head) = batch_with_cosines(&[0.1]);
        assert!(adaptive_margins(&batch, &mut head, 0.2, 0.0).is_err());
        assert!(adaptive_margins(&batch, &mut head, 0.2, 1.5).is_err());
    }

    #[test]
    fn masked_samples_do_not_contribute() {
        let (batch, head) = batch_with_cosines(&[0.1, 0.2]);
        let out = margin_hinge(&batch, &head, &[0.5, 0.5], Some(&[0, 1])).unwrap();
        assert!((out.loss - 0.15).abs() < 1e-12);
        assert_eq!(out.diagnostics.violation_count, 1);
        assert_eq!(out.grad_features.row(0), &[0.0, 0.0]);
    }
}
