use super::margin::{hard_mask_from_logits, margin_hinge};
use super::neighbor::dlmc_term;
use super::softmax::{normalized_softmax, softmax_ce};
use super::{
    adaptive_margins, check_inputs, intra_cosines, mean, ClassHead, FeatureBatch, LossConfig,
    LossOutput, LossVariant,
};
use crate::error::Result;
use crate::numcore::{cosine_matrix, matmul};

/// Full training objective for `cfg.variant`.
///
/// Adaptive-margin variants first refresh `head.margins` from this batch and
/// then evaluate the hinge against the refreshed margins.
pub fn joint_loss(batch: &FeatureBatch, head: &mut ClassHead, cfg: &LossConfig) -> Result<LossOutput> {
    cfg.validate()?;
    if cfg.variant.is_adaptive() {
        adaptive_margins(batch, head, cfg.alpha0, cfg.p)?;
    }
    joint_loss_detached(batch, head, cfg)
}

/// Same objective as [`joint_loss`] but with the margins currently stored in
/// `head` treated as constants; nothing is written back.
pub fn joint_loss_detached(batch: &FeatureBatch, head: &ClassHead, cfg: &LossConfig) -> Result<LossOutput> {
    cfg.validate()?;
    check_inputs("joint_loss", batch, head)?;
    let variant = cfg.variant;

    let mut out = if variant.is_normalized() {
        normalized_softmax(batch, head)?
    } else {
        softmax_ce(batch, head)?
    };

    let fixed = || vec![cfg.alpha; batch.len()];
    let per_class = || -> Vec<f64> { batch.labels.iter().map(|&y| head.margins[y]).collect() };

    let raw_logits = matmul(&batch.features, &head.weights)?;
    let cos = cosine_matrix(&batch.features, &head.weights)?;
    let hard = if variant.is_normalized() {
        hard_mask_from_logits(&cos, &batch.labels)
    } else {
        hard_mask_from_logits(&raw_logits, &batch.labels)
    };

    let metric = match variant {
        LossVariant::Softmax => None,
        LossVariant::Lmc | LossVariant::Nlmc => Some(margin_hinge(batch, head, &fixed(), None)?),
        LossVariant::Hlmc => Some(margin_hinge(batch, head, &fixed(), Some(&hard))?),
        LossVariant::Malmc | LossVariant::NlmcMalmc => {
            Some(margin_hinge(batch, head, &per_class(), None)?)
        }
        LossVariant::Dlmc => Some(dlmc_term(batch, head, cfg.alpha, cfg.p)?),
    };

    let intra = intra_cosines(&cos, &batch.labels);
    out.diagnostics.violation_count = match &metric {
        Some(term) => term.diagnostics.violation_count,
        // no hinge: report how many samples sit below the configured margin
        None => intra.iter().filter(|&&c| c < cfg.alpha).count(),
    };
    if let Some(term) = &metric {
        out.accumulate(term, cfg.lambda)?;
    }
    out.diagnostics.mean_intra_cosine = mean(&intra);
    out.diagnostics.hard_count = hard.iter().map(|&h| h as usize).sum();
    out.diagnostics.per_class_margins = head.margins.clone();
    Ok(out)
}
