//! Helpers shared by the integration suites: an independent breadth-first
//! hop-count oracle and config builders for the reference scenarios.
#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};

use leosim::congestion::{PolicyKind, PolicyParams};
use leosim::constellation::{ConstellationParams, NodeId};
use leosim::sim::SimConfig;

/// Fewest-hops distance from `src` to `dst` over live links, by plain
/// breadth-first search. Independent of the analytical direction estimate,
/// so the two can check each other.
pub fn bfs_hops(params: &ConstellationParams, src: NodeId, dst: NodeId) -> Option<u32> {
    if src == dst {
        return Some(0);
    }
    let mut seen: HashSet<NodeId> = HashSet::from([src]);
    let mut frontier: VecDeque<(NodeId, u32)> = VecDeque::from([(src, 0)]);
    while let Some((node, hops)) = frontier.pop_front() {
        for (_, link) in params.neighbors(node).expect("node in grid").iter() {
            let Some(next) = *link else { continue };
            if next == dst {
                return Some(hops + 1);
            }
            if seen.insert(next) {
                frontier.push_back((next, hops + 1));
            }
        }
    }
    None
}

/// Forwarding-policy tunables of the reference scenario: 200-packet
/// buffers with a threshold of 150, preference 0.9, metric weights
/// 0.25/0.8.
pub fn reference_policy(kind: PolicyKind) -> PolicyParams {
    PolicyParams {
        kind,
        queue_threshold: 150,
        buffer_capacity: 200,
        primary_preference: 0.9,
        neighbor_weight: 0.25,
        buffer_weight: 0.8,
    }
}

/// The reference scenario: a 6x7-node mid-latitude region of the 12x24
/// polar grid at 600 km, driven by windowed bursts of 10 flows x 500
/// packets at 15 kpkt/s.
pub fn region_config(kind: PolicyKind) -> SimConfig {
    SimConfig {
        constellation: ConstellationParams::polar(12, 24, 600.0),
        region: (NodeId::new(2, 3), NodeId::new(7, 9)),
        lambda_in: 1.5e4,
        t_step: 0.1,
        n_pairs: 10,
        n_packets: 500,
        packet_size_bits: 8192,
        link_rate_bps: 2.5e7,
        policy: reference_policy(kind),
        generation_duration: 1.0,
        seed: 7,
        replications: 20,
        max_hops: None,
    }
}

/// A two-node equatorial region carrying a single one-hop flow; the
/// smallest useful closed-form scenario.
pub fn two_node_config(kind: PolicyKind) -> SimConfig {
    SimConfig {
        constellation: ConstellationParams::polar(12, 24, 600.0),
        region: (NodeId::new(2, 0), NodeId::new(3, 0)),
        lambda_in: 1000.0,
        t_step: 0.1,
        n_pairs: 1,
        n_packets: 1,
        packet_size_bits: 8192,
        link_rate_bps: 2.5e7,
        policy: reference_policy(kind),
        generation_duration: 0.05,
        seed: 7,
        replications: 1,
        max_hops: None,
    }
}
