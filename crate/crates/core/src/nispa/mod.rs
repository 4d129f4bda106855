//! Phase-based training with stable/candidate/plastic unit partitioning.

mod controller;
mod partition;
mod select;

pub use controller::{
    promote_and_freeze, reinit_plastic, run_task, train_until_plateau, LearnerState, NispaConfig, PhaseRecord,
    StopReason, TaskLog, TaskOptions,
};
pub use partition::{UnitPartition, UnitState};
pub use select::{select_candidates, select_layer, tau_schedule, TauPoint, TauSchedule};
