use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::partition::{UnitPartition, UnitState};
use crate::engine::ActivationTrace;
use crate::error::{Error, Result};
use crate::Real;

/// Shape of the per-phase decrease of tau.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TauSchedule {
    /// `0.5 * (1 + cos(p * pi / k))`
    Cosine,
    /// `max(0, 1 - step * p)`
    Linear { step: f64 },
}

impl TauSchedule {
    pub const LINEAR_DEFAULT: TauSchedule = TauSchedule::Linear { step: 0.05 };
}

/// A schedule value; `clamped` is set when `p` ran past the end of the
/// cosine schedule and the value was pinned to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauPoint {
    pub value: f64,
    pub clamped: bool,
}

/// Fraction of a layer's activation that stable plus candidate units must
/// capture at phase `p`.
pub fn tau_schedule(p: usize, k: usize, schedule: TauSchedule) -> TauPoint {
    match schedule {
        TauSchedule::Cosine if p > k => TauPoint {
            value: 0.0,
            clamped: true,
        },
        TauSchedule::Cosine => TauPoint {
            value: 0.5 * (1.0 + (p as f64 * std::f64::consts::PI / k as f64).cos()),
            clamped: false,
        },
        TauSchedule::Linear { step } => TauPoint {
            value: (1.0 - step * p as f64).max(0.0),
            clamped: false,
        },
    }
}

/// Chooses the plastic units of one layer that join the candidates.
///
/// Units are added in decreasing activation, lower index first on ties,
/// until stable plus candidate units hold at least `tau` of the total.
pub fn select_layer(per_unit: &[Real], states: &[UnitState], tau: f64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::TauOutOfRange(tau));
    }
    let total: Real = per_unit.iter().sum();
    let target = tau as Real * total;
    let mut captured: Real = per_unit
        .iter()
        .zip(states)
        .filter(|(_, &s)| s != UnitState::Plastic)
        .map(|(&a, _)| a)
        .sum();
    let mut plastic: Vec<usize> = (0..per_unit.len())
        .filter(|&i| states[i] == UnitState::Plastic)
        .collect();
    plastic.sort_by(|&a, &b| {
        per_unit[b]
            .partial_cmp(&per_unit[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut chosen = Vec::new();
    for unit in plastic {
        if captured >= target {
            break;
        }
        captured += per_unit[unit];
        chosen.push(unit);
    }
    Ok(chosen)
}

/// Re-selects the candidates of every hidden layer from scratch: earlier
/// candidates return to the plastic pool, then [`select_layer`] picks the
/// new set. Returns the candidates per layer.
pub fn select_candidates(
    trace: &ActivationTrace,
    partition: &mut UnitPartition,
    tau: f64,
) -> Result<Vec<Vec<usize>>> {
    if trace.per_unit.len() != partition.num_hidden() {
        return Err(Error::PartitionMismatch(format!(
            "trace has {} layers, partition {}",
            trace.per_unit.len(),
            partition.num_hidden()
        )));
    }
    let mut out = Vec::with_capacity(trace.per_unit.len());
    for (h, per_unit) in trace.per_unit.iter().enumerate() {
        for u in partition.candidate(h) {
            partition.set_state(h, u, UnitState::Plastic);
        }
        let chosen = select_layer(per_unit, partition.states(h), tau)?;
        for &u in &chosen {
            partition.set_state(h, u, UnitState::Candidate);
        }
        out.push(chosen);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use UnitState::*;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(tau_schedule(0, 30, TauSchedule::Cosine).value, 1.0);
        assert_eq!(tau_schedule(0, 7, TauSchedule::Cosine).value, 1.0);
        assert!((tau_schedule(15, 30, TauSchedule::Cosine).value - 0.5).abs() < 1e-15);
        assert_eq!(tau_schedule(30, 30, TauSchedule::Cosine).value, 0.0);
    }

    #[test]
    fn cosine_first_phase() {
        // 0.5 * (1 + cos(pi / 30)), evaluated independently to 16 digits.
        let v = tau_schedule(1, 30, TauSchedule::Cosine).value;
        assert!((v - 0.997_260_947_684_136_7).abs() < 1e-15, "{v}");
    }

    #[test]
    fn cosine_past_end_is_clamped() {
        let t = tau_schedule(31, 30, TauSchedule::Cosine);
        assert_eq!(t.value, 0.0);
        assert!(t.clamped);
    }

    #[test]
    fn linear_steps_down_to_zero() {
        let s = TauSchedule::LINEAR_DEFAULT;
        assert!((tau_schedule(1, 30, s).value - 0.95).abs() < 1e-15);
        assert!((tau_schedule(10, 30, s).value - 0.5).abs() < 1e-12);
        assert_eq!(tau_schedule(25, 30, s).value, 0.0);
    }

    #[test]
    fn greedy_selects_two_largest() {
        let chosen = select_layer(&[5.0, 3.0, 1.0, 1.0], &[Plastic; 4], 0.8).unwrap();
        assert_eq!(chosen, vec![0, 1]);
    }

    #[test]
    fn tau_zero_selects_nothing() {
        assert!(select_layer(&[5.0, 3.0, 1.0, 1.0], &[Plastic; 4], 0.0).unwrap().is_empty());
    }

    #[test]
    fn tau_one_selects_everything() {
        let chosen = select_layer(&[5.0, 3.0, 1.0, 1.0], &[Plastic; 4], 1.0).unwrap();
        assert_eq!(chosen, vec![0, 1, 2, 3]);
    }

    #[test]
    fn stable_units_alone_can_suffice() {
        let states = [Plastic, Stable, Plastic, Plastic];
        assert!(select_layer(&[1.0, 9.0, 1.0, 1.0], &states, 0.75).unwrap().is_empty());
        assert_eq!(select_layer(&[1.0, 9.0, 2.0, 1.0], &states, 0.8).unwrap(), vec![2]);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let chosen = select_layer(&[2.0, 4.0, 2.0, 2.0], &[Plastic; 4], 0.7).unwrap();
        assert_eq!(chosen, vec![1, 0, 2]);
    }

    #[test]
    fn tau_outside_unit_interval_is_rejected() {
        assert!(select_layer(&[1.0], &[Plastic], 1.5).is_err());
        assert!(select_layer(&[1.0], &[Plastic], -0.1).is_err());
    }

    #[test]
    fn candidates_move_out_of_plastic() {
        let mut partition = UnitPartition::from_states(vec![vec![Plastic; 4], vec![Plastic; 2]], vec![false; 2]);
        let trace = ActivationTrace::from_per_unit(vec![vec![5.0, 3.0, 1.0, 1.0], vec![0.0, 0.0]]);
        let chosen = select_candidates(&trace, &mut partition, 0.8).unwrap();
        assert_eq!(chosen, vec![vec![0, 1], vec![]]);
        assert_eq!(partition.candidate(0), vec![0, 1]);
        assert_eq!(partition.plastic(0), vec![2, 3]);
    }

    #[test]
    fn lower_tau_releases_candidates() {
        let mut partition = UnitPartition::from_states(vec![vec![Plastic; 4]], vec![false; 2]);
        let trace = ActivationTrace::from_per_unit(vec![vec![5.0, 3.0, 1.0, 1.0]]);
        select_candidates(&trace, &mut partition, 0.8).unwrap();
        let chosen = select_candidates(&trace, &mut partition, 0.5).unwrap();
        assert_eq!(chosen, vec![vec![0]]);
        assert_eq!(partition.plastic(0), vec![1, 2, 3]);
    }
}
