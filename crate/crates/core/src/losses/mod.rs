//! Softmax cross-entropy and the cosine-margin family built on top of it.
//!
//! Every loss returns a [`LossOutput`] carrying the scalar value and analytic
//! gradients with respect to the batch features, the class-weight matrix and
//! the shared scale. Hinge kinks take subgradient 0. The per-class adaptive
//! margins, the misclassification mask and the nearest-class selection are
//! treated as constants when differentiating.

mod config;
mod geometry;
mod joint;
mod margin;
mod neighbor;
mod softmax;

use std::fmt;

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng};

pub use config::{LossConfig, LossVariant};
pub use joint::{joint_loss, joint_loss_detached};
pub use margin::{
    adaptive_margins, hard_mask, hard_mask_from_logits, lmc_term, margin_hinge, select_count,
};
pub use neighbor::{dlmc_term, triplet_variant};
pub use softmax::{normalized_softmax, softmax_ce};

/// Scale values below this are clamped after every update.
pub const MIN_SCALE: f64 = 1e-3;

/// Mini-batch of embeddings with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl FeatureBatch {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape(
                "FeatureBatch::new",
                format!("{} feature rows, {} labels", features.rows(), labels.len()),
            ));
        }
        Ok(FeatureBatch { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// Last-layer classifier: one weight column per class, the per-class
/// adaptive margins and the shared feature/weight scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassHead {
    pub weights: Matrix,
    pub margins: Vec<f64>,
    pub scale: f64,
}

impl ClassHead {
    pub fn new(weights: Matrix, margins: Vec<f64>, scale: f64) -> Result<Self> {
        if margins.len() != weights.cols() {
            return Err(Error::shape(
                "ClassHead::new",
                format!("{} margins for {} classes", margins.len(), weights.cols()),
            ));
        }
        if !(scale > 0.0) {
            return Err(Error::contract(format!("scale must be positive, got {scale}")));
        }
        Ok(ClassHead {
            weights,
            margins,
            scale,
        })
    }

    /// Glorot-uniform weights, margins at `alpha0`.
    pub fn init(dim: usize, classes: usize, alpha0: f64, scale: f64, rng: &mut Rng) -> Self {
        let bound = (6.0 / (dim + classes) as f64).sqrt();
        let weights = Matrix::from_fn(dim, classes, |_, _| rng.uniform_in(-bound, bound));
        ClassHead {
            weights,
            margins: vec![alpha0; classes],
            scale: scale.max(MIN_SCALE),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn classes(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub mean_intra_cosine: f64,
    pub violation_count: usize,
    pub hard_count: usize,
    pub per_class_margins: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad_features: Matrix,
    pub grad_weights: Matrix,
    pub grad_scale: f64,
    pub diagnostics: Diagnostics,
}

impl LossOutput {
    fn zeros(batch: &FeatureBatch, head: &ClassHead) -> Self {
        LossOutput {
            loss: 0.0,
            grad_features: Matrix::zeros(batch.len(), batch.dim()),
            grad_weights: Matrix::zeros(head.dim(), head.classes()),
            grad_scale: 0.0,
            diagnostics: Diagnostics::default(),
        }
    }

    /// `self += weight * other` for the value and every gradient.
    pub fn accumulate(&mut self, other: &LossOutput, weight: f64) -> Result<()> {
        self.loss += weight * other.loss;
        self.grad_features.axpy(weight, &other.grad_features)?;
        self.grad_weights.axpy(weight, &other.grad_weights)?;
        self.grad_scale += weight * other.grad_scale;
        Ok(())
    }
}

impl fmt::Display for LossOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "loss={:.6} violations={} hard={} mean_intra_cos={:.4}",
            self.loss,
            self.diagnostics.violation_count,
            self.diagnostics.hard_count,
            self.diagnostics.mean_intra_cosine
        )
    }
}

pub(crate) fn check_inputs(op: &'static str, batch: &FeatureBatch, head: &ClassHead) -> Result<()> {
    if batch.features.rows() != batch.labels.len() {
        return Err(Error::shape(
            op,
            format!(
                "{} feature rows, {} labels",
                batch.features.rows(),
                batch.labels.len()
            ),
        ));
    }
    if batch.dim() != head.dim() {
        return Err(Error::shape(
            op,
            format!("feature dim {} vs head dim {}", batch.dim(), head.dim()),
        ));
    }
    if head.margins.len() != head.classes() {
        return Err(Error::shape(
            op,
            format!("{} margins for {} classes", head.margins.len(), head.classes()),
        ));
    }
    if let Some((i, &y)) = batch
        .labels
        .iter()
        .enumerate()
        .find(|(_, &y)| y >= head.classes())
    {
        return Err(Error::contract(format!(
            "{op}: label {y} of sample {i} is outside [0, {})",
            head.classes()
        )));
    }
    Ok(())
}

pub(crate) fn intra_cosines(cos: &Matrix, labels: &[usize]) -> Vec<f64> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| cos.get(i, y))
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}
