use super::geometry::CosineGeometry;
use super::{check_inputs, intra_cosines, mean, ClassHead, FeatureBatch, LossOutput};
use crate::error::Result;
use crate::numcore::{log_softmax_rows, matmul, Matrix};

/// `(softmax(logits) − onehot(labels)) / M` together with the mean negative
/// log-likelihood.
fn cross_entropy(logits: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let m = labels.len();
    let log_p = log_softmax_rows(logits);
    let inv_m = 1.0 / m.max(1) as f64;
    let mut nll = 0.0;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for (i, &y) in labels.iter().enumerate() {
        nll -= log_p.get(i, y);
        for (j, g) in grad.row_mut(i).iter_mut().enumerate() {
            let target = if j == y { 1.0 } else { 0.0 };
            *g = (log_p.get(i, j).exp() - target) * inv_m;
        }
    }
    (nll * inv_m, grad)
}

/// Plain softmax cross-entropy over the logits `Wᵀx` (no bias).
pub fn softmax_ce(batch: &FeatureBatch, head: &ClassHead) -> Result<LossOutput> {
    check_inputs("softmax_ce", batch, head)?;
    let logits = matmul(&batch.features, &head.weights)?;
    let (loss, grad_logits) = cross_entropy(&logits, &batch.labels);
    let grad_features = matmul(&grad_logits, &head.weights.transpose())?;
    let grad_weights = matmul(&batch.features.transpose(), &grad_logits)?;

    let mut out = LossOutput::zeros(batch, head);
    out.loss = loss;
    out.grad_features = grad_features;
    out.grad_weights = grad_weights;
    Ok(out)
}

/// Softmax cross-entropy over `s²·cos(W_j, x_i)`: features and weight columns
/// both rescaled to norm `s`.
pub fn normalized_softmax(batch: &FeatureBatch, head: &ClassHead) -> Result<LossOutput> {
    check_inputs("normalized_softmax", batch, head)?;
    let geo = CosineGeometry::new(&batch.features, &head.weights)?;
    let s = head.scale;
    let s2 = s * s;
    let logits = geo.cos.scaled(s2);
    let (loss, grad_logits) = cross_entropy(&logits, &batch.labels);

    let grad_scale: f64 = grad_logits
        .as_slice()
        .iter()
        .zip(geo.cos.as_slice())
        .map(|(g, c)| g * 2.0 * s * c)
        .sum();
    let (grad_features, grad_weights) = geo.backward(&grad_logits.scaled(s2));

    let mut out = LossOutput::zeros(batch, head);
    out.loss = loss;
    out.grad_features = grad_features;
    out.grad_weights = grad_weights;
    out.grad_scale = grad_scale;
    out.diagnostics.mean_intra_cosine = mean(&intra_cosines(&geo.cos, &batch.labels));
    Ok(out)
}
