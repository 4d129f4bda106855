//! Continual learning in sparse multilayer perceptrons.
//!
//! Training of each task is split into phases. After every phase the most
//! active plastic units become candidate stable units, connections from plastic
//! units into stable ones are dropped and the same number of connections is
//! grown into plastic units, so per-layer density stays fixed. At the task
//! boundary candidates are promoted and the incoming connections of every
//! stable unit are frozen, which makes their activations immune to later tasks.
//!
//! Layout:
//!
//! * [`engine`] masked sparse MLP, optimizers, training and snapshots.
//! * [`nispa`] the phase controller, unit partition and candidate selection.
//! * [`rewire`] drop/grow of connections and dead-unit repair.
//! * [`replay`] class-incremental variant with a class-balanced replay buffer.
//! * [`data`] IDX loading, task sequences, permutations, synthetic tasks.
//! * [`bench`] experiment runner, baselines, analyses and reports.

pub mod bench;
pub mod data;
pub mod engine;
pub mod error;
pub mod nispa;
pub mod replay;
pub mod rewire;

pub use error::{Error, Result};

/// Floating point type used throughout the engine.
#[cfg(not(feature = "f32"))]
pub type Real = f64;
/// Floating point type used throughout the engine.
#[cfg(feature = "f32")]
pub type Real = f32;

/// The single random generator type. Every run owns exactly one of these.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the run generator from an integer seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
