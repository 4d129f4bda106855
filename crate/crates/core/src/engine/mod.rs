//! Masked sparse MLP: layers, forward/backward passes, optimizers and
//! snapshots.

mod layer;
mod network;
mod optim;
mod snapshot;
mod train;

pub use layer::SparseLinearLayer;
pub use network::{ActivationTrace, HeadLayout, Network, UnitSilence};
pub use optim::{OptimizerKind, OptimizerState};
pub use snapshot::{Snapshot, SnapshotStore};
pub use train::{
    cross_entropy, loss_and_gradients, train_epochs, train_epochs_with, BatchSource, Gradients,
    TrainParams, TrainStats,
};

pub(crate) use layer::kaiming;

#[cfg(test)]
mod tests;
