use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::engine::Network;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitState {
    Plastic,
    Candidate,
    Stable,
}

/// Stable / candidate / plastic state of every hidden unit.
///
/// Input units always count as stable sources. Output units are tracked
/// separately: an output unit marked stable is protected from plastic inputs
/// during rewiring and gets frozen at promotion, the others accept grown
/// connections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitPartition {
    hidden: Vec<Vec<UnitState>>,
    stable_outputs: Vec<bool>,
}

impl UnitPartition {
    /// Every hidden and output unit plastic.
    pub fn all_plastic(net: &Network) -> Self {
        Self {
            hidden: net
                .hidden_widths()
                .iter()
                .map(|&w| vec![UnitState::Plastic; w])
                .collect(),
            stable_outputs: vec![false; net.output_width()],
        }
    }

    pub fn from_states(hidden: Vec<Vec<UnitState>>, stable_outputs: Vec<bool>) -> Self {
        Self {
            hidden,
            stable_outputs,
        }
    }

    pub fn num_hidden(&self) -> usize {
        self.hidden.len()
    }

    pub fn states(&self, h: usize) -> &[UnitState] {
        &self.hidden[h]
    }

    pub fn state(&self, h: usize, unit: usize) -> UnitState {
        self.hidden[h][unit]
    }

    pub fn set_state(&mut self, h: usize, unit: usize, state: UnitState) {
        self.hidden[h][unit] = state;
    }

    fn units_in(&self, h: usize, state: UnitState) -> Vec<usize> {
        self.hidden[h]
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| (s == state).then_some(i))
            .collect()
    }

    pub fn stable(&self, h: usize) -> Vec<usize> {
        self.units_in(h, UnitState::Stable)
    }

    pub fn candidate(&self, h: usize) -> Vec<usize> {
        self.units_in(h, UnitState::Candidate)
    }

    pub fn plastic(&self, h: usize) -> Vec<usize> {
        self.units_in(h, UnitState::Plastic)
    }

    pub fn stable_counts(&self) -> Vec<usize> {
        (0..self.hidden.len()).map(|h| self.stable(h).len()).collect()
    }

    pub fn candidate_counts(&self) -> Vec<usize> {
        (0..self.hidden.len()).map(|h| self.candidate(h).len()).collect()
    }

    /// Stable plus candidate units per hidden layer.
    pub fn protected_counts(&self) -> Vec<usize> {
        self.hidden
            .iter()
            .map(|layer| layer.iter().filter(|&&s| s != UnitState::Plastic).count())
            .collect()
    }

    pub fn stable_outputs(&self) -> &[bool] {
        &self.stable_outputs
    }

    /// Marks a range of output units as stable targets.
    pub fn mark_outputs_stable(&mut self, units: Range<usize>) {
        for u in units {
            self.stable_outputs[u] = true;
        }
    }

    /// Whether source `j` of weight layer `l` is a plastic unit. Input units
    /// are stable by definition.
    pub fn source_is_plastic(&self, l: usize, j: usize) -> bool {
        l > 0 && self.hidden[l - 1][j] == UnitState::Plastic
    }

    /// Whether target `i` of weight layer `l` is stable or candidate.
    pub fn target_is_protected(&self, l: usize, i: usize) -> bool {
        if l == self.hidden.len() {
            self.stable_outputs[i]
        } else {
            self.hidden[l][i] != UnitState::Plastic
        }
    }

    /// Moves every candidate to the stable set.
    pub fn promote_candidates(&mut self) {
        for s in self.hidden.iter_mut().flatten() {
            if *s == UnitState::Candidate {
                *s = UnitState::Stable;
            }
        }
    }

    /// Errors unless the partition has one entry per hidden and output unit.
    pub fn check_matches(&self, net: &Network) -> Result<()> {
        let widths: Vec<usize> = self.hidden.iter().map(Vec::len).collect();
        if widths != net.hidden_widths() || self.stable_outputs.len() != net.output_width() {
            return Err(Error::PartitionMismatch(format!(
                "partition widths {:?}+{} vs network {:?}+{}",
                widths,
                self.stable_outputs.len(),
                net.hidden_widths(),
                net.output_width()
            )));
        }
        Ok(())
    }

    /// First connection from a plastic unit into a stable or candidate unit.
    pub fn find_isolation_violation(&self, net: &Network) -> Option<(usize, usize, usize)> {
        for (l, layer) in net.layers().iter().enumerate() {
            for ((i, j), &m) in layer.mask().indexed_iter() {
                if m && self.target_is_protected(l, i) && self.source_is_plastic(l, j) {
                    return Some((l, j, i));
                }
            }
        }
        None
    }

    /// Errors on any plastic-to-protected connection.
    pub fn check_isolation(&self, net: &Network) -> Result<()> {
        match self.find_isolation_violation(net) {
            Some((layer, source_unit, target)) => Err(Error::IsolationViolation {
                layer,
                source_unit,
                target,
            }),
            None => Ok(()),
        }
    }
}
