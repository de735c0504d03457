//! Central finite-difference verification of the analytic loss gradients.
//!
//! Random instances that land within `kink_margin` of a non-differentiable
//! point (hinge kink, argmax tie, top-K tie, cosine clamp) are redrawn, since
//! neither side of the comparison is meaningful there.

use crate::error::Result;
use crate::losses::{
    adaptive_margins, dlmc_term, hard_mask_from_logits, triplet_variant, joint_loss_detached, select_count, ClassHead,
    FeatureBatch, LossConfig, LossOutput, LossVariant,
};
use crate::numcore::{cosine_matrix, matmul, Matrix, Rng};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    pub kink_margin: f64,
    pub samples: usize,
    pub min_classes: usize,
    pub max_classes: usize,
    pub dim: usize,
    /// Test hook: perturb the analytic gradient before comparing.
    pub corrupt_gradient: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-5,
            kink_margin: 1e-3,
            samples: 8,
            min_classes: 4,
            max_classes: 6,
            dim: 6,
            corrupt_gradient: false,
        }
    }
}

/// Largest elementwise relative error per parameter group.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradErrors {
    pub features: f64,
    pub weights: f64,
    pub scale: f64,
}

impl GradErrors {
    pub fn max(&self) -> f64 {
        self.features.max(self.weights).max(self.scale)
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub variant: LossVariant,
    pub trials: usize,
    pub redrawn: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

/// `|a − n| / max(|a|, |n|, 1e-3)`: relative where the gradient is sizeable,
/// absolute (scaled by 1e3) where it is close to zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Central difference of `f` with respect to every entry of `values`.
pub fn numeric_gradient(values: &mut [f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(values.len());
    for k in 0..values.len() {
        let orig = values[k];
        values[k] = orig + step;
        let plus = f(values);
        values[k] = orig - step;
        let minus = f(values);
        values[k] = orig;
        grad.push((plus - minus) / (2.0 * step));
    }
    grad
}

fn max_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Random loss configuration for `variant` with the metric term given full
/// weight so its gradient is not drowned by the softmax part.
pub fn random_config(variant: LossVariant, rng: &mut Rng) -> LossConfig {
    LossConfig {
        variant,
        lambda: 1.0,
        alpha: rng.uniform_in(0.0, 0.9),
        alpha0: rng.uniform_in(0.0, 0.5),
        p: rng.uniform_in(0.05, 1.0),
        scale_init: rng.uniform_in(1.0, 4.0),
        scale_learnable: true,
    }
}

/// Random batch and head. Adaptive variants get their margins refreshed on
/// the batch, as a training step would.
pub fn random_instance(
    cfg: &LossConfig,
    opts: &GradCheckOptions,
    rng: &mut Rng,
) -> Result<(FeatureBatch, ClassHead)> {
    let n = opts.min_classes + rng.below(opts.max_classes - opts.min_classes + 1);
    let x = Matrix::from_fn(opts.samples, opts.dim, |_, _| rng.normal());
    let w = Matrix::from_fn(opts.dim, n, |_, _| rng.normal());
    let labels = (0..opts.samples).map(|_| rng.below(n)).collect();
    let margins = (0..n).map(|_| rng.uniform_in(cfg.alpha0, 0.9)).collect();
    let batch = FeatureBatch::new(x, labels)?;
    let mut head = ClassHead::new(w, margins, cfg.scale_init)?;
    if cfg.variant.is_adaptive() {
        adaptive_margins(&batch, &mut head, cfg.alpha0, cfg.p)?;
    }
    Ok((batch, head))
}

/// Whether any non-differentiable boundary lies within `margin` of this
/// instance.
pub fn near_kink(batch: &FeatureBatch, head: &ClassHead, cfg: &LossConfig, margin: f64) -> Result<bool> {
    let cos = cosine_matrix(&batch.features, &head.weights)?;
    if cos.as_slice().iter().any(|c| c.abs() > 1.0 - margin) {
        return Ok(true);
    }
    let variant = cfg.variant;
    let n = head.classes();

    let logits = if variant.is_normalized() {
        cos.clone()
    } else {
        matmul(&batch.features, &head.weights)?
    };
    if variant == LossVariant::Hlmc {
        for i in 0..batch.len() {
            let mut row = logits.row(i).to_vec();
            row.sort_by(|a, b| b.total_cmp(a));
            if row.len() > 1 && row[0] - row[1] < margin {
                return Ok(true);
            }
        }
        let _ = hard_mask_from_logits(&logits, &batch.labels);
    }

    for (i, &y) in batch.labels.iter().enumerate() {
        let c_y = cos.get(i, y);
        let hinge_margin = match variant {
            LossVariant::Softmax | LossVariant::Dlmc => None,
            LossVariant::Malmc | LossVariant::NlmcMalmc => Some(head.margins[y]),
            _ => Some(cfg.alpha),
        };
        if let Some(a) = hinge_margin {
            if (a - c_y).abs() < margin {
                return Ok(true);
            }
        }
        if variant == LossVariant::Dlmc {
            let k = select_count(cfg.p, n - 1);
            let mut inter: Vec<f64> = (0..n).filter(|&j| j != y).map(|j| cos.get(i, j)).collect();
            inter.sort_by(|a, b| b.total_cmp(a));
            if k < inter.len() && inter[k - 1] - inter[k] < margin {
                return Ok(true);
            }
            let kf = k as f64;
            let shift = inter[0] / kf;
            let lse = shift + inter[..k].iter().map(|c| (c / kf - shift).exp()).sum::<f64>().ln();
            if (lse - c_y + cfg.alpha).abs() < margin {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Compares analytic and numeric gradients of the detached joint loss for one
/// instance.
pub fn check_instance(
    batch: &FeatureBatch,
    head: &ClassHead,
    cfg: &LossConfig,
    opts: &GradCheckOptions,
) -> Result<GradErrors> {
    let mut analytic: LossOutput = joint_loss_detached(batch, head, cfg)?;
    if opts.corrupt_gradient {
        analytic.grad_features.scale(1.01);
        analytic.grad_weights.scale(1.01);
        analytic.grad_scale *= 1.01;
    }

    let loss_at = |b: &FeatureBatch, h: &ClassHead| {
        joint_loss_detached(b, h, cfg)
            .map(|o| o.loss)
            .unwrap_or(f64::NAN)
    };

    let mut feats = batch.features.as_slice().to_vec();
    let num_x = numeric_gradient(&mut feats, opts.step, |v| {
        let mut b = batch.clone();
        b.features.as_mut_slice().copy_from_slice(v);
        loss_at(&b, head)
    });

    let mut weights = head.weights.as_slice().to_vec();
    let num_w = numeric_gradient(&mut weights, opts.step, |v| {
        let mut h = head.clone();
        h.weights.as_mut_slice().copy_from_slice(v);
        loss_at(batch, &h)
    });

    let mut scale = [head.scale];
    let num_s = numeric_gradient(&mut scale, opts.step, |v| {
        let mut h = head.clone();
        h.scale = v[0];
        loss_at(batch, &h)
    });

    Ok(GradErrors {
        features: max_error(analytic.grad_features.as_slice(), &num_x),
        weights: max_error(analytic.grad_weights.as_slice(), &num_w),
        scale: max_error(&[analytic.grad_scale], &num_s),
    })
}

/// Runs `trials` accepted random instances of `variant`.
pub fn run_suite(
    variant: LossVariant,
    seed: u64,
    trials: usize,
    opts: &GradCheckOptions,
) -> Result<SuiteReport> {
    let mut rng = Rng::derived(seed, variant as u64);
    let mut accepted = 0;
    let mut redrawn = 0;
    let mut worst: f64 = 0.0;
    while accepted < trials {
        let cfg = random_config(variant, &mut rng);
        let (batch, head) = random_instance(&cfg, opts, &mut rng)?;
        if near_kink(&batch, &head, &cfg, opts.kink_margin)? {
            redrawn += 1;
            continue;
        }
        let errs = check_instance(&batch, &head, &cfg, opts)?;
        worst = worst.max(errs.max());
        accepted += 1;
    }
    Ok(SuiteReport {
        variant,
        trials,
        redrawn,
        max_rel_err: worst,
        tolerance: opts.tolerance,
    })
}

/// DLMC with a single selected neighbour against the triplet form on
/// `trials` random instances; returns how many differ in any bit of the
/// value or gradients.
pub fn triplet_reduction_mismatches(seed: u64, trials: usize, opts: &GradCheckOptions) -> Result<usize> {
    let mut rng = Rng::derived(seed, 100);
    let mut mismatches = 0;
    for _ in 0..trials {
        let cfg = LossConfig {
            p: 1e-6,
            ..random_config(LossVariant::Dlmc, &mut rng)
        };
        let (batch, head) = random_instance(&cfg, opts, &mut rng)?;
        debug_assert_eq!(select_count(cfg.p, head.classes() - 1), 1);
        let a = dlmc_term(&batch, &head, cfg.alpha, cfg.p)?;
        let b = triplet_variant(&batch, &head, cfg.alpha)?;
        let same_bits = a.loss.to_bits() == b.loss.to_bits()
            && a.grad_scale.to_bits() == b.grad_scale.to_bits()
            && bits_equal(&a.grad_features, &b.grad_features)
            && bits_equal(&a.grad_weights, &b.grad_weights);
        if !same_bits {
            mismatches += 1;
        }
    }
    Ok(mismatches)
}

fn bits_equal(a: &Matrix, b: &Matrix) -> bool {
    a.shape() == b.shape() && a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits())
}
