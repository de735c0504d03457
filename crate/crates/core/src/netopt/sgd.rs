use crate::error::{Error, Result};

/// Mini-batch SGD with momentum, L2 weight decay and a step schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub base_lr: f64,
    /// `(iteration, divisor)`: from `iteration` on, the rate is divided by
    /// `divisor` (cumulatively).
    pub lr_drops: Vec<(usize, f64)>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub max_iter: usize,
    pub batch_size: usize,
}

/// Schedule used when training from scratch: 0.1, divided by 10 at 16K and
/// 24K, stopping at 28K.
const SCRATCH_DROPS: [(usize, f64); 2] = [(16_000, 10.0), (24_000, 10.0)];
const SCRATCH_ITERS: usize = 28_000;

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            base_lr: 0.1,
            lr_drops: SCRATCH_DROPS.to_vec(),
            momentum: 0.9,
            weight_decay: 0.0005,
            max_iter: SCRATCH_ITERS,
            batch_size: 256,
        }
    }
}

impl SgdConfig {
    /// The from-scratch schedule compressed to `max_iter` iterations, drop
    /// points kept at the same fractions of the run.
    pub fn scratch_scaled(max_iter: usize) -> Self {
        let lr_drops = SCRATCH_DROPS
            .iter()
            .map(|&(at, div)| {
                let scaled = (at as f64 * max_iter as f64 / SCRATCH_ITERS as f64).round();
                (scaled as usize, div)
            })
            .collect();
        SgdConfig {
            lr_drops,
            max_iter,
            ..SgdConfig::default()
        }
    }

    /// Fine-tuning from a softmax model: constant 0.001.
    pub fn fine_tune() -> Self {
        SgdConfig {
            base_lr: 0.001,
            lr_drops: Vec::new(),
            max_iter: 4000,
            ..SgdConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::contract(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if self.lr_drops.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::contract("lr drop iterations must be strictly increasing"));
        }
        if self.lr_drops.iter().any(|&(_, d)| !(d > 0.0 && d.is_finite())) {
            return Err(Error::contract("lr drop divisors must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::contract(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::contract(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::contract("batch_size must be >= 1"));
        }
        Ok(())
    }
}

/// Learning rate in effect at `iteration`.
pub fn lr_at(cfg: &SgdConfig, iteration: usize) -> f64 {
    cfg.lr_drops
        .iter()
        .filter(|&&(at, _)| at <= iteration)
        .fold(cfg.base_lr, |lr, &(_, div)| lr / div)
}

/// One momentum step on a flat parameter block:
/// `v ← μ·v + (g + wd·θ)`, `θ ← θ − lr·v`.
pub fn sgd_update(
    params: &mut [f64],
    grads: &[f64],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), velocity.len());
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + (g + weight_decay * *p);
        *p -= lr * *v;
    }
}

/// [`sgd_update`] with the rate, momentum and decay of `cfg` at `iteration`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], velocity: &mut [f64], cfg: &SgdConfig, iteration: usize) {
    sgd_update(params, grads, velocity, lr_at(cfg, iteration), cfg.momentum, cfg.weight_decay);
}
