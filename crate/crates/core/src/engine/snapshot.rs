use std::collections::BTreeMap;

use super::network::Network;
use super::optim::OptimizerState;
use crate::error::{Error, Result};
use crate::nispa::UnitPartition;

/// Full training state at one point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub net: Network,
    pub partition: UnitPartition,
    pub optimizer: OptimizerState,
}

impl Snapshot {
    pub fn capture(net: &Network, partition: &UnitPartition, optimizer: &OptimizerState) -> Self {
        Self {
            net: net.clone(),
            partition: partition.clone(),
            optimizer: optimizer.clone(),
        }
    }
}

/// Snapshots keyed by phase index.
#[derive(Debug, Clone, Default)]
pub struct SnapshotStore {
    by_phase: BTreeMap<usize, Snapshot>,
}

impl SnapshotStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn store(&mut self, phase: usize, snapshot: Snapshot) {
        self.by_phase.insert(phase, snapshot);
    }

    pub fn get(&self, phase: usize) -> Result<&Snapshot> {
        self.by_phase.get(&phase).ok_or(Error::MissingSnapshot(phase))
    }

    /// Returns an independent copy of the snapshot taken at `phase`.
    pub fn restore(&self, phase: usize) -> Result<Snapshot> {
        self.get(phase).cloned()
    }

    pub fn len(&self) -> usize {
        self.by_phase.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_phase.is_empty()
    }
}
