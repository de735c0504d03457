use std::cmp::Ordering;

use super::geometry::CosineGeometry;
use super::margin::select_count;
use super::{check_inputs, intra_cosines, mean, ClassHead, FeatureBatch, LossOutput};
use crate::error::{Error, Result};
use crate::numcore::Matrix;

fn require_two_classes(op: &str, head: &ClassHead) -> Result<()> {
    if head.classes() < 2 {
        return Err(Error::contract(format!(
            "{op} needs at least two classes, head has {}",
            head.classes()
        )));
    }
    Ok(())
}

/// Inter-class cosines of sample `i`, most similar first; equal values keep
/// class-index order.
pub(crate) fn ranked_inter_class(cos: &Matrix, i: usize, label: usize) -> Vec<(f64, usize)> {
    let mut inter: Vec<(f64, usize)> = cos
        .row(i)
        .iter()
        .copied()
        .enumerate()
        .filter(|&(j, _)| j != label)
        .map(|(j, c)| (c, j))
        .collect();
    inter.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    inter
}

/// Nearest-neighbour log-sum-exp hinge:
/// `(1/M) Σ { ln Σ_{j ∈ top-K} e^{c_j / K} − c_{y_i} + α }₊`
/// where the `K = select_count(p, N − 1)` most similar other classes are
/// chosen per sample and held fixed for differentiation.
pub fn dlmc_term(batch: &FeatureBatch, head: &ClassHead, alpha: f64, p: f64) -> Result<LossOutput> {
    check_inputs("dlmc_term", batch, head)?;
    require_two_classes("dlmc_term", head)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::contract(format!("p must lie in (0, 1], got {p}")));
    }
    let geo = CosineGeometry::new(&batch.features, &head.weights)?;
    let m = batch.len();
    let k = select_count(p, head.classes() - 1);
    let kf = k as f64;
    let inv_m = 1.0 / m.max(1) as f64;

    let mut grad_cos = Matrix::zeros(m, head.classes());
    let mut total = 0.0;
    let mut active = 0;
    for (i, &y) in batch.labels.iter().enumerate() {
        let nearest = &ranked_inter_class(&geo.cos, i, y)[..k];
        let shift = nearest[0].0 / kf;
        let weights: Vec<f64> = nearest.iter().map(|&(c, _)| (c / kf - shift).exp()).collect();
        let sum: f64 = weights.iter().sum();
        let lse = shift + sum.ln();

        let inner = lse - geo.cos.get(i, y) + alpha;
        if inner > 0.0 {
            total += inner;
            active += 1;
            grad_cos.set(i, y, -inv_m);
            for (&(_, j), e) in nearest.iter().zip(&weights) {
                grad_cos.add_at(i, j, e / sum / kf * inv_m);
            }
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

/// `(1/M) Σ {c_nearest − c_{y_i} + α}₊` with `c_nearest` the largest
/// inter-class cosine of each sample.
pub fn triplet_variant(batch: &FeatureBatch, head: &ClassHead, alpha: f64) -> Result<LossOutput> {
    check_inputs("triplet_variant", batch, head)?;
    require_two_classes("triplet_variant", head)?;
    let geo = CosineGeometry::new(&batch.features, &head.weights)?;
    let m = batch.len();
    let inv_m = 1.0 / m.max(1) as f64;

    let mut grad_cos = Matrix::zeros(m, head.classes());
    let mut total = 0.0;
    let mut active = 0;
    for (i, &y) in batch.labels.iter().enumerate() {
        let row = geo.cos.row(i);
        let mut nearest: Option<usize> = None;
        for (j, &c) in row.iter().enumerate() {
            if j != y && nearest.is_none_or(|n| c > row[n]) {
                nearest = Some(j);
            }
        }
        let n = nearest.expect("at least two classes");
        let inner = row[n] - row[y] + alpha;
        if inner > 0.0 {
            total += inner;
            active += 1;
            grad_cos.set(i, y, -inv_m);
            grad_cos.add_at(i, n, inv_m);
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    /// One sample, three classes, with prescribed cosines to each class.
    fn fixture(c_own: f64, c_other: f64) -> (FeatureBatch, ClassHead) {
        let x = Matrix::new(1, 2, vec![1.0, 0.0]).unwrap();
        let col = |c: f64| [c, (1.0 - c * c).sqrt()];
        let (a, b, z) = (col(c_own), col(c_other), col(-0.9));
        let w = Matrix::new(2, 3, vec![a[0], b[0], z[0], a[1], b[1], -z[1]]).unwrap();
        (
            FeatureBatch::new(x, vec![0]).unwrap(),
            ClassHead::new(w, vec![0.0; 3], 1.0).unwrap(),
        )
    }

    #[test]
    fn reduces_to_triplet_hand_values() {
        let (batch, head) = fixture(0.7, 0.5);
        let out = dlmc_term(&batch, &head, 0.1, 0.01).unwrap();
        assert_eq!(out.loss, 0.0);
        let trip = triplet_variant(&batch, &head, 0.1).unwrap();
        assert_eq!(trip.loss, 0.0);

        let (batch, head) = fixture(0.7, 0.75);
        let out = dlmc_term(&batch, &head, 0.1, 0.01).unwrap();
        assert!((out.loss - 0.15).abs() < 1e-12);
        assert_eq!(out.loss, triplet_variant(&batch, &head, 0.1).unwrap().loss);
    }

    #[test]
    fn anchor_on_own_weight_orthogonal_rest() {
        let x = Matrix::new(1, 3, vec![0.0, 2.0, 0.0]).unwrap();
        let head = ClassHead::new(Matrix::identity(3), vec![0.0; 3], 1.0).unwrap();
        let batch = FeatureBatch::new(x, vec![1]).unwrap();
        assert_eq!(triplet_variant(&batch, &head, 0.0).unwrap().loss, 0.0);
    }

    #[test]
    fn single_class_is_rejected() {
        let batch = FeatureBatch::new(Matrix::new(1, 2, vec![1.0, 0.0]).unwrap(), vec![0]).unwrap();
        let head = ClassHead::new(Matrix::new(2, 1, vec![1.0, 0.0]).unwrap(), vec![0.0], 1.0).unwrap();
        assert!(dlmc_term(&batch, &head, 0.1, 0.5).is_err());
        assert!(triplet_variant(&batch, &head, 0.1).is_err());
    }

    #[test]
    fn k_one_is_bit_identical_to_triplet() {
        let mut rng = Rng::new(2024);
        for _ in 0..200 {
            let n = 2 + rng.below(5);
            let x = Matrix::from_fn(5, 4, |_, _| rng.normal());
            let w = Matrix::from_fn(4, n, |_, _| rng.normal());
            let labels = (0..5).map(|_| rng.below(n)).collect();
            let batch = FeatureBatch::new(x, labels).unwrap();
            let head = ClassHead::new(w, vec![0.0; n], 1.0).unwrap();
            let alpha = rng.uniform();
            let d = dlmc_term(&batch, &head, alpha, 1e-6).unwrap();
            let t = triplet_variant(&batch, &head, alpha).unwrap();
            assert_eq!(d.loss.to_bits(), t.loss.to_bits());
            assert_eq!(d.grad_features, t.grad_features);
            assert_eq!(d.grad_weights, t.grad_weights);
        }
    }

    #[test]
    fn full_k_uses_every_other_class() {
        let (batch, head) = fixture(0.2, 0.1);
        // K = 2: ln(e^{0.1/2} + e^{-0.9/2}) − 0.2 + 0.05
        let expect = ((0.05f64).exp() + (-0.45f64).exp()).ln() - 0.2 + 0.05;
        let out = dlmc_term(&batch, &head, 0.05, 1.0).unwrap();
        assert!((out.loss - expect).abs() < 1e-12);
    }
}
