//! Feed-forward embedding network, momentum SGD and the training loop.

mod checkpoint;
mod network;
mod sgd;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use network::{
    Activation, DenseLayer, ForwardCache, LayerGrads, NetworkGrads, NetworkSpec, NetworkState, PRELU_INIT,
};
pub use sgd::{lr_at, sgd_step, sgd_update, SgdConfig};
pub use train::{predict_classes, train, TrainLogEntry, TrainOptions, TrainOutcome};
