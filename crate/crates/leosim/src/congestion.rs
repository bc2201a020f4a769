//! Congestion-aware forwarding policies.
//!
//! Every node keeps four output buffers, one per link direction, and hears
//! about its neighbors' state only through a scalar *traffic metric*
//! piggybacked on every data packet it receives. The metric a node sends
//! toward one neighbor blends, over its other live links, the locally seen
//! queue lengths with the metrics those links' neighbors reported — so the
//! value diffuses congestion information one extra hop per exchange.
//!
//! Two per-hop policies turn a routing [`HopChoice`] into the actual output
//! buffer. The *threshold* policy spills to the secondary link only once the
//! primary buffer reaches a fill threshold. The *probabilistic* policy
//! scores both links by a congestion level (local fill blended with the
//! stored metric) and, once the primary looks congested, keeps it only with
//! a probability that shrinks smoothly as the secondary starts looking
//! better.

use serde::{Deserialize, Serialize};

use crate::constellation::{DirMap, Direction};
use crate::routing::HopChoice;

/// Which forwarding policy a simulation runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Threshold,
    Probabilistic,
}

impl PolicyKind {
    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Threshold => "threshold",
            PolicyKind::Probabilistic => "probabilistic",
        }
    }
}

/// Tunables shared by both policies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub kind: PolicyKind,
    /// Buffer fill (packets) at and above which a link counts as congested.
    pub queue_threshold: u32,
    /// Output buffer capacity in packets, counting the one in transmission.
    pub buffer_capacity: u32,
    /// Probability weight in favor of the primary link when both links look
    /// equally congested.
    pub primary_preference: f64,
    /// Weight of a neighbor's reported metric (vs. its observed queue) in
    /// the metric advertised onward.
    pub neighbor_weight: f64,
    /// Weight of the local queue (vs. the stored metric) in the congestion
    /// level used for forwarding decisions.
    pub buffer_weight: f64,
}

impl PolicyParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.queue_threshold == 0 || self.queue_threshold > self.buffer_capacity {
            return Err(format!(
                "queue threshold must satisfy 0 < threshold <= capacity, got {} / {}",
                self.queue_threshold, self.buffer_capacity
            ));
        }
        for (name, v) in [
            ("primary_preference", self.primary_preference),
            ("neighbor_weight", self.neighbor_weight),
            ("buffer_weight", self.buffer_weight),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        Ok(())
    }
}

/// What a node can see when it makes a forwarding decision: its own output
/// queues, the last metric heard from each neighbor, and which links exist.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeighborView {
    pub queue_len: DirMap<u32>,
    pub stored_metric: DirMap<f64>,
    pub link_live: DirMap<bool>,
}

/// Probability of keeping the primary link when both it and the secondary
/// are congested.
///
/// Equal congestion yields exactly `preference`; the probability rises
/// toward 1 as the secondary looks worse and falls toward 0 as the primary
/// does. The +1 terms keep the law defined at empty queues.
pub fn primary_probability(primary_level: f64, secondary_level: f64, preference: f64) -> f64 {
    let num = (secondary_level + 1.0) * preference;
    let den = primary_level + 1.0 + (secondary_level - primary_level) * preference;
    num / den
}

/// Traffic metric advertised on packets sent toward `toward`: the average,
/// over the other live links, of the neighbor-reported metric blended with
/// the locally observed queue length. A node with no other live link
/// advertises zero.
pub fn outgoing_metric(view: &NeighborView, toward: Direction, neighbor_weight: f64) -> f64 {
    let mut sum = 0.0;
    let mut live = 0u32;
    for dir in Direction::ALL {
        if dir == toward || !view.link_live[dir] {
            continue;
        }
        sum += neighbor_weight * view.stored_metric[dir]
            + (1.0 - neighbor_weight) * f64::from(view.queue_len[dir]);
        live += 1;
    }
    if live == 0 {
        0.0
    } else {
        sum / f64::from(live)
    }
}

/// Congestion level of one link: local buffer fill blended with the metric
/// last heard from that link's neighbor.
pub fn congestion_level(queue_len: u32, stored_metric: f64, buffer_weight: f64) -> f64 {
    buffer_weight * f64::from(queue_len) + (1.0 - buffer_weight) * stored_metric
}

/// Threshold spillover rule: primary until its buffer reaches the threshold,
/// then the secondary if that one still has room below the threshold, and
/// the primary again once both are past it.
pub fn choose_threshold(view: &NeighborView, choice: &HopChoice, params: &PolicyParams) -> Direction {
    if view.queue_len[choice.primary] < params.queue_threshold {
        return choice.primary;
    }
    match choice.secondary {
        Some(sec) if view.queue_len[sec] < params.queue_threshold => sec,
        _ => choice.primary,
    }
}

/// Probabilistic rule: primary while its congestion level is below the
/// threshold; past it, keep the primary with [`primary_probability`], using
/// `draw` (uniform in [0, 1)) as the randomness source.
pub fn choose_probabilistic(
    view: &NeighborView,
    choice: &HopChoice,
    params: &PolicyParams,
    draw: f64,
) -> Direction {
    let level = |dir: Direction| {
        congestion_level(view.queue_len[dir], view.stored_metric[dir], params.buffer_weight)
    };
    let primary_level = level(choice.primary);
    if primary_level < f64::from(params.queue_threshold) {
        return choice.primary;
    }
    let Some(sec) = choice.secondary else {
        return choice.primary;
    };
    let keep = primary_probability(primary_level, level(sec), params.primary_preference);
    if draw < keep {
        choice.primary
    } else {
        sec
    }
}
