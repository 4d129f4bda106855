//! Density-preserving structural plasticity.
//!
//! A rewiring round drops every connection from a plastic unit into a stable
//! or candidate unit, repairs dead units, then grows as many connections as
//! were removed, always into plastic targets. New weights are drawn from a
//! normal fitted to the layer's existing weights.

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::engine::{Network, SparseLinearLayer};
use crate::nispa::{UnitPartition, UnitState};
use crate::{Real, Rng};

/// Which candidate connections new edges are drawn from.
///
/// Type-1 edges join two plastic units, type-2 edges leave a stable or
/// candidate unit (inputs count as stable) and enter a plastic unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrowthPolicy {
    /// Uniform over type-1 and type-2 together.
    Random,
    /// Type-1 first, type-2 only once type-1 is exhausted.
    Novel,
    /// Type-2 first, type-1 only once type-2 is exhausted.
    Transfer,
}

/// Mean and population standard deviation of a layer's existing weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerWeightStats {
    pub mu: Real,
    pub sigma: Real,
}

impl LayerWeightStats {
    pub fn sample(&self, rng: &mut Rng) -> Real {
        let z: f64 = StandardNormal.sample(rng);
        self.mu + self.sigma * z as Real
    }
}

/// Statistics over the `mask == true` positions; `(0, 0)` for an empty
/// layer.
pub fn layer_weight_stats(layer: &SparseLinearLayer) -> LayerWeightStats {
    let (mu, sigma) = layer.existing_weight_moments();
    LayerWeightStats { mu, sigma }
}

/// Counts for one weight layer.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRewire {
    pub dropped: usize,
    pub grown: usize,
    /// Requested grows that found no free position.
    pub shortfall: usize,
    /// Grows taken from the policy's secondary pool.
    pub fallback: usize,
    /// Dead-unit repairs that went beyond the grow quota.
    pub surplus: usize,
}

/// What a rewiring step changed. Layer `l` is the weight layer feeding
/// `l`'s outputs; units are `(hidden layer, index)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewireReport {
    pub layers: Vec<LayerRewire>,
    pub demoted_units: Vec<(usize, usize)>,
    pub reconnected_units: Vec<(usize, usize)>,
    /// Plastic units left without outputs because no plastic target exists.
    pub unrepaired_units: Vec<(usize, usize)>,
    /// Positions whose weight was removed or newly created, per layer.
    #[serde(skip)]
    pub touched: Vec<Vec<(usize, usize)>>,
}

impl RewireReport {
    fn new(layers: usize) -> Self {
        Self {
            layers: vec![LayerRewire::default(); layers],
            touched: vec![Vec::new(); layers],
            ..Self::default()
        }
    }

    pub fn dropped(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.dropped).collect()
    }

    pub fn grown(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.grown).collect()
    }

    pub fn shortfall(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.shortfall).collect()
    }

    pub fn total_shortfall(&self) -> usize {
        self.layers.iter().map(|l| l.shortfall).sum()
    }

    fn absorb(&mut self, other: RewireReport) {
        if self.layers.len() < other.layers.len() {
            self.layers.resize(other.layers.len(), LayerRewire::default());
            self.touched.resize(other.layers.len(), Vec::new());
        }
        for (a, b) in self.layers.iter_mut().zip(other.layers) {
            a.dropped += b.dropped;
            a.grown += b.grown;
            a.shortfall += b.shortfall;
            a.fallback += b.fallback;
            a.surplus += b.surplus;
        }
        for (a, b) in self.touched.iter_mut().zip(other.touched) {
            a.extend(b);
        }
        self.demoted_units.extend(other.demoted_units);
        self.reconnected_units.extend(other.reconnected_units);
        self.unrepaired_units.extend(other.unrepaired_units);
    }
}

/// Removes every connection whose target is stable or candidate and whose
/// source is plastic. Weights are zeroed. A frozen connection only matches
/// when its source was demoted back to plastic, and is removed as well.
pub fn drop_connections(net: &mut Network, partition: &UnitPartition) -> RewireReport {
    let n_layers = net.layers().len();
    let mut report = RewireReport::new(n_layers);
    for l in 0..n_layers {
        let doomed: Vec<(usize, usize)> = net.layers()[l]
            .mask()
            .indexed_iter()
            .filter(|&((i, j), &m)| m && partition.target_is_protected(l, i) && partition.source_is_plastic(l, j))
            .map(|(pos, _)| pos)
            .collect();
        let layer = net.layer_mut(l);
        for &(i, j) in &doomed {
            layer.frozen[(i, j)] = false;
            layer.remove_connection(i, j);
        }
        report.layers[l].dropped = doomed.len();
        report.touched[l] = doomed;
    }
    report
}

fn target_is_plastic(partition: &UnitPartition, l: usize, i: usize) -> bool {
    !partition.target_is_protected(l, i)
}

/// Grows `counts[l]` connections in every layer `l`, sampled uniformly
/// without replacement from free positions whose target is plastic. The
/// policy picks the primary pool; the other pool is used once it runs dry
/// and whatever remains is recorded as shortfall.
pub fn grow_connections(
    net: &mut Network,
    partition: &UnitPartition,
    counts: &[usize],
    policy: GrowthPolicy,
    rng: &mut Rng,
) -> RewireReport {
    let n_layers = net.layers().len();
    let mut report = RewireReport::new(n_layers);
    for (l, &count) in counts.iter().enumerate().take(n_layers) {
        if count == 0 {
            continue;
        }
        let layer = &net.layers()[l];
        let (mut type1, mut type2) = (Vec::new(), Vec::new());
        let mut any = Vec::new();
        for ((i, j), &m) in layer.mask().indexed_iter() {
            if m || !target_is_plastic(partition, l, i) {
                continue;
            }
            match policy {
                GrowthPolicy::Random => any.push((i, j)),
                _ if partition.source_is_plastic(l, j) => type1.push((i, j)),
                _ => type2.push((i, j)),
            }
        }
        let (primary, secondary) = match policy {
            GrowthPolicy::Random => (any, Vec::new()),
            GrowthPolicy::Novel => (type1, type2),
            GrowthPolicy::Transfer => (type2, type1),
        };
        let stats = layer_weight_stats(layer);
        let from_primary = count.min(primary.len());
        let from_secondary = (count - from_primary).min(secondary.len());
        let mut chosen: Vec<(usize, usize)> = index::sample(rng, primary.len(), from_primary)
            .into_iter()
            .map(|k| primary[k])
            .collect();
        chosen.extend(
            index::sample(rng, secondary.len(), from_secondary)
                .into_iter()
                .map(|k| secondary[k]),
        );
        let layer = net.layer_mut(l);
        for &(i, j) in &chosen {
            layer.add_connection(i, j, stats.sample(rng));
        }
        let entry = &mut report.layers[l];
        entry.grown = chosen.len();
        entry.fallback = from_secondary;
        entry.shortfall = count - chosen.len();
        report.touched[l] = chosen;
    }
    report
}

/// Demotes stable or candidate units that receive nothing from stable
/// sources, and gives plastic units without outgoing connections one new
/// edge to a random plastic unit of the next layer. Repeats until nothing
/// changes; the connections of demoted units into protected units are
/// dropped along the way.
pub fn fix_dead_units(net: &mut Network, partition: &mut UnitPartition, rng: &mut Rng) -> RewireReport {
    let n_layers = net.layers().len();
    let mut report = RewireReport::new(n_layers);
    let mut skipped = std::collections::HashSet::new();
    loop {
        let mut changed = false;

        let mut demoted = Vec::new();
        for h in 0..partition.num_hidden() {
            for i in 0..partition.states(h).len() {
                if partition.state(h, i) == UnitState::Plastic {
                    continue;
                }
                let fed = net.layers()[h].incoming(i).any(|j| !partition.source_is_plastic(h, j));
                if !fed {
                    demoted.push((h, i));
                }
            }
        }
        for &(h, i) in &demoted {
            partition.set_state(h, i, UnitState::Plastic);
            net.layer_mut(h).unfreeze_unit(i);
        }
        if !demoted.is_empty() {
            changed = true;
            report.demoted_units.extend(demoted);
            report.absorb(drop_connections(net, partition));
        }

        for h in 0..partition.num_hidden() {
            let next = h + 1;
            for j in 0..partition.states(h).len() {
                if partition.state(h, j) != UnitState::Plastic
                    || skipped.contains(&(h, j))
                    || net.layers()[next].outgoing(j).next().is_some()
                {
                    continue;
                }
                let targets: Vec<usize> = (0..net.layers()[next].out_units())
                    .filter(|&i| target_is_plastic(partition, next, i))
                    .collect();
                if targets.is_empty() {
                    skipped.insert((h, j));
                    report.unrepaired_units.push((h, j));
                    continue;
                }
                let target = targets[rng.random_range(0..targets.len())];
                let stats = layer_weight_stats(&net.layers()[next]);
                net.layer_mut(next).add_connection(target, j, stats.sample(rng));
                report.reconnected_units.push((h, j));
                report.touched[next].push((target, j));
                report.layers[next].grown += 1;
                changed = true;
            }
        }

        if !changed {
            return report;
        }
    }
}

/// One complete rewiring step: drop, dead-unit repair, then grow the
/// remaining quota. Repairs count against the quota of their layer; any
/// repair beyond it is reported as surplus.
pub fn rewire_round(
    net: &mut Network,
    partition: &mut UnitPartition,
    policy: GrowthPolicy,
    rng: &mut Rng,
) -> RewireReport {
    let mut report = drop_connections(net, partition);
    report.absorb(fix_dead_units(net, partition, rng));
    let quota: Vec<usize> = report
        .layers
        .iter()
        .map(|l| l.dropped.saturating_sub(l.grown))
        .collect();
    for l in &mut report.layers {
        l.surplus = l.grown.saturating_sub(l.dropped);
        // Repairs within the quota stand in for grows.
        l.grown -= l.surplus;
    }
    report.absorb(grow_connections(net, partition, &quota, policy, rng));
    report
}

/// Connection density per weight layer and pooled over the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub per_layer: Vec<f64>,
    pub global: f64,
}

pub fn density(net: &Network) -> Density {
    let per_layer = net.layers().iter().map(|l| l.density()).collect();
    let (on, all) = net.layers().iter().fold((0, 0), |(on, all), l| {
        (on + l.connection_count(), all + l.possible_connections())
    });
    Density {
        per_layer,
        global: on as f64 / all as f64,
    }
}
