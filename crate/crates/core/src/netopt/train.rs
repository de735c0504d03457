use super::checkpoint::Checkpoint;
use super::network::{NetworkSpec, NetworkState};
use super::sgd::{lr_at, sgd_update, SgdConfig};
use crate::dataio::{batches, Dataset};
use crate::error::{Error, Result};
use crate::losses::{joint_loss, ClassHead, FeatureBatch, LossConfig, MIN_SCALE};
use crate::numcore::{cosine_matrix, matmul, Matrix, Rng};

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Drives the per-epoch batch order.
    pub seed: u64,
    /// Horizontal-flip augmentation; ignored for non-image datasets.
    pub augment: bool,
    /// Start from these network and class weights instead of a fresh init.
    /// Margins and scale restart from the loss configuration.
    pub warm_start: Option<Checkpoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogEntry {
    pub iteration: usize,
    pub lr: f64,
    pub loss: f64,
    pub violation_count: usize,
    pub hard_count: usize,
    /// Per-class margins after the update, adaptive variants only.
    pub margins: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub net: NetworkState,
    pub head: ClassHead,
    pub log: Vec<TrainLogEntry>,
}

impl TrainOutcome {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            net: self.net.clone(),
            head: self.head.clone(),
        }
    }
}

fn warm_start(ck: &Checkpoint, spec: &NetworkSpec, classes: usize) -> Result<NetworkState> {
    let theirs = &ck.net.spec;
    let same_shape = theirs.input_dim == spec.input_dim
        && theirs.hidden_dims == spec.hidden_dims
        && theirs.feature_dim == spec.feature_dim
        && theirs.activation == spec.activation;
    if !same_shape {
        return Err(Error::contract(format!(
            "checkpoint network {}-{:?}-{} ({}) does not match configured {}-{:?}-{} ({})",
            theirs.input_dim,
            theirs.hidden_dims,
            theirs.feature_dim,
            theirs.activation,
            spec.input_dim,
            spec.hidden_dims,
            spec.feature_dim,
            spec.activation
        )));
    }
    if ck.head.classes() != classes {
        return Err(Error::contract(format!(
            "checkpoint has {} classes, dataset has {classes}",
            ck.head.classes()
        )));
    }
    let mut net = ck.net.clone();
    net.spec = spec.clone();
    net.reset_velocity();
    Ok(net)
}

/// Runs `sgd_cfg.max_iter` iterations of batch → forward → joint loss →
/// backward → momentum step, cycling through freshly shuffled epochs.
pub fn train(
    dataset: &Dataset,
    spec: &NetworkSpec,
    loss_cfg: &LossConfig,
    sgd_cfg: &SgdConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    spec.validate()?;
    loss_cfg.validate()?;
    sgd_cfg.validate()?;
    if dataset.is_empty() || dataset.class_count == 0 {
        return Err(Error::contract("training needs a nonempty dataset with known classes"));
    }
    if dataset.dim() != spec.input_dim {
        return Err(Error::shape(
            "train",
            format!("dataset dim {} vs network input dim {}", dataset.dim(), spec.input_dim),
        ));
    }
    let classes = dataset.class_count;
    let mut net = match &opts.warm_start {
        Some(ck) => warm_start(ck, spec, classes)?,
        None => NetworkState::init(spec)?,
    };
    let mut head = match &opts.warm_start {
        Some(ck) => ClassHead::new(
            ck.head.weights.clone(),
            vec![loss_cfg.alpha0; classes],
            loss_cfg.scale_init,
        )?,
        None => ClassHead::init(
            spec.feature_dim,
            classes,
            loss_cfg.alpha0,
            loss_cfg.scale_init,
            &mut Rng::derived(spec.init_seed, 1),
        ),
    };
    let mut head_velocity = Matrix::zeros(head.dim(), head.classes());
    let mut scale_velocity = 0.0;
    let train_scale = loss_cfg.variant.is_normalized() && loss_cfg.scale_learnable;

    let mut epoch_seeds = Rng::derived(opts.seed, 2);
    let mut log = Vec::with_capacity(sgd_cfg.max_iter);
    let mut iteration = 0;
    while iteration < sgd_cfg.max_iter {
        let epoch = batches(dataset, sgd_cfg.batch_size, epoch_seeds.next_u64(), opts.augment)?;
        for refs in epoch {
            if iteration == sgd_cfg.max_iter {
                break;
            }
            let (inputs, labels) = dataset.gather(&refs)?;
            let (features, cache) = net.forward(&inputs)?;
            let batch = FeatureBatch::new(features, labels)?;
            let out = joint_loss(&batch, &mut head, loss_cfg)?;
            if !out.loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "loss became {} at iteration {iteration}",
                    out.loss
                )));
            }
            let grads = net.backward(&cache, &out.grad_features)?;

            let lr = lr_at(sgd_cfg, iteration);
            let (mu, wd) = (sgd_cfg.momentum, sgd_cfg.weight_decay);
            let tensors = grads.tensors();
            let NetworkState {
                layers, velocity, ..
            } = &mut net;
            let params = layers.iter_mut().flat_map(|l| {
                [&mut l.weights, &mut l.bias].into_iter().chain(l.slope.as_mut())
            });
            for ((p, g), v) in params.zip(tensors).zip(velocity.iter_mut()) {
                sgd_update(p.as_mut_slice(), g.as_slice(), v.as_mut_slice(), lr, mu, wd);
            }
            sgd_update(
                head.weights.as_mut_slice(),
                out.grad_weights.as_slice(),
                head_velocity.as_mut_slice(),
                lr,
                mu,
                wd,
            );
            if train_scale {
                scale_velocity = mu * scale_velocity + out.grad_scale;
                head.scale = (head.scale - lr * scale_velocity).max(MIN_SCALE);
            }
            let finite = net.params().iter().all(|p| p.is_finite())
                && head.weights.is_finite()
                && head.scale.is_finite();
            if !finite {
                return Err(Error::Numerical(format!(
                    "parameters became non-finite at iteration {iteration}"
                )));
            }

            log.push(TrainLogEntry {
                iteration,
                lr,
                loss: out.loss,
                violation_count: out.diagnostics.violation_count,
                hard_count: out.diagnostics.hard_count,
                margins: loss_cfg.variant.is_adaptive().then(|| head.margins.clone()),
            });
            iteration += 1;
        }
    }
    Ok(TrainOutcome { net, head, log })
}

/// Class predicted for every row of `inputs`: argmax of the cosine for
/// normalized heads, of the raw logit otherwise.
pub fn predict_classes(net: &NetworkState, head: &ClassHead, inputs: &Matrix, normalized: bool) -> Result<Vec<usize>> {
    let (features, _) = net.forward(inputs)?;
    let scores = if normalized {
        cosine_matrix(&features, &head.weights)?
    } else {
        matmul(&features, &head.weights)?
    };
    Ok((0..scores.rows())
        .map(|r| {
            let row = scores.row(r);
            (0..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best })
        })
        .collect())
}
