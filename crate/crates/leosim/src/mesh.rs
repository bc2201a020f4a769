//! Infinite-mesh queueing analysis of the probabilistic policy.
//!
//! Far from seam and poles the constellation grid looks like a regular mesh
//! carrying homogeneous traffic: every node sees the same two mean output
//! occupancies, one for horizontal links and one for vertical links, and
//! each output buffer behaves as an M/M/1 queue fed by a thinned share of
//! the node's arrival stream. The share going right is governed by the
//! probabilistic policy in the pure-metric regime (decisions driven solely
//! by the piggybacked metrics), with each packet preferring a horizontal
//! link with a given probability and picking sides uniformly. That yields a
//! two-dimensional fixed point: occupancies determine direction
//! probabilities, which determine per-link load, which determines
//! occupancies again. [`solve_fixed_point`] iterates this map with damping;
//! [`micro_sim`] replays the same regime packet-by-packet on a small torus
//! and reports empirical occupancies, serving as the model's oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::congestion::{
    choose_probabilistic, outgoing_metric, primary_probability, NeighborView, PolicyKind,
    PolicyParams,
};
use crate::constellation::Direction;
use crate::des::EventQueue;
use crate::routing::HopChoice;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("invalid mesh parameters: {0}")]
    InvalidParams(String),
    #[error("direction probabilities are indeterminate at zero occupancy in the simplified variant")]
    Indeterminate,
    #[error("no finite delay: the load has no stable fixed point")]
    Unstable,
}

/// Which form of the keep-primary law the analysis uses.
///
/// `Simplified` drops the +1 regularizers from the law — the classic
/// closed-form large-queue approximation, undefined at zero occupancy.
/// `Exact` keeps the law exactly as the forwarding code applies it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshVariant {
    Simplified,
    Exact,
}

impl MeshVariant {
    pub fn label(self) -> &'static str {
        match self {
            MeshVariant::Simplified => "simplified",
            MeshVariant::Exact => "exact",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshParams {
    /// Probability that a packet's primary direction is horizontal.
    pub horizontal_primary_prob: f64,
    /// Preference for the primary link in the keep-primary law.
    pub preference: f64,
    /// Exogenous packet arrival rate per node.
    pub arrival_rate: f64,
    /// Service rate of each output link.
    pub service_rate: f64,
    pub variant: MeshVariant,
}

impl MeshParams {
    fn validate(&self) -> Result<(), MeshError> {
        let fail = |m: String| Err(MeshError::InvalidParams(m));
        if !(0.0..=1.0).contains(&self.horizontal_primary_prob) {
            return fail(format!(
                "horizontal primary probability must lie in [0, 1], got {}",
                self.horizontal_primary_prob
            ));
        }
        if !(0.0..=1.0).contains(&self.preference) {
            return fail(format!("preference must lie in [0, 1], got {}", self.preference));
        }
        if !(self.arrival_rate >= 0.0) {
            return fail(format!("arrival rate must be nonnegative, got {}", self.arrival_rate));
        }
        if !(self.service_rate > 0.0) {
            return fail(format!("service rate must be positive, got {}", self.service_rate));
        }
        Ok(())
    }
}

/// Solved (or abandoned) mesh fixed point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshSolution {
    /// Mean packets queued toward one horizontal neighbor.
    pub horizontal_occupancy: f64,
    /// Mean packets queued toward one vertical neighbor.
    pub vertical_occupancy: f64,
    /// Utilization of a horizontal link.
    pub horizontal_load: f64,
    /// Utilization of a vertical link.
    pub vertical_load: f64,
    pub right_prob: f64,
    pub up_prob: f64,
    /// False when some link load reached 1 or the iteration hit its cap.
    pub stable: bool,
    pub iterations: u32,
}

/// Keep-primary probability given the metric congestion levels of the
/// primary and secondary links.
fn keep_primary(
    primary_level: f64,
    secondary_level: f64,
    preference: f64,
    variant: MeshVariant,
) -> Result<f64, MeshError> {
    match variant {
        MeshVariant::Exact => Ok(primary_probability(primary_level, secondary_level, preference)),
        MeshVariant::Simplified => {
            let den = (1.0 - preference) * primary_level + preference * secondary_level;
            if den == 0.0 {
                return Err(MeshError::Indeterminate);
            }
            Ok(preference * secondary_level / den)
        }
    }
}

/// Expected metric levels seen for a horizontal and a vertical link.
///
/// A horizontal neighbor reports the average of its other three queues (one
/// horizontal, two vertical); a vertical neighbor reports one vertical and
/// two horizontal.
fn metric_levels(occupancy_h: f64, occupancy_v: f64) -> (f64, f64) {
    let level_h = (occupancy_h + 2.0 * occupancy_v) / 3.0;
    let level_v = (occupancy_v + 2.0 * occupancy_h) / 3.0;
    (level_h, level_v)
}

/// Probability that a packet is forwarded to the right-hand neighbor, given
/// the mean occupancies. Left is symmetric, so this is half the horizontal
/// share.
pub fn right_prob(
    occupancy_h: f64,
    occupancy_v: f64,
    horizontal_primary_prob: f64,
    preference: f64,
    variant: MeshVariant,
) -> Result<f64, MeshError> {
    let (level_h, level_v) = metric_levels(occupancy_h, occupancy_v);
    let keep_h = keep_primary(level_h, level_v, preference, variant)?;
    let keep_v = keep_primary(level_v, level_h, preference, variant)?;
    let p_h = horizontal_primary_prob;
    // Right is reached either as a kept horizontal primary or as the
    // secondary of an abandoned vertical primary; each side splits evenly.
    Ok(p_h / 2.0 * keep_h + (1.0 - p_h) / 2.0 * (1.0 - keep_v))
}

/// Probability that a packet is forwarded to the upward neighbor.
pub fn up_prob(
    occupancy_h: f64,
    occupancy_v: f64,
    horizontal_primary_prob: f64,
    preference: f64,
    variant: MeshVariant,
) -> Result<f64, MeshError> {
    let (level_h, level_v) = metric_levels(occupancy_h, occupancy_v);
    let keep_h = keep_primary(level_h, level_v, preference, variant)?;
    let keep_v = keep_primary(level_v, level_h, preference, variant)?;
    let p_h = horizontal_primary_prob;
    Ok((1.0 - p_h) / 2.0 * keep_v + p_h / 2.0 * (1.0 - keep_h))
}

/// Solve the occupancy fixed point by damped iteration from a near-empty
/// mesh. Returns `stable = false` (with the last iterate) as soon as some
/// link load reaches 1, or when `max_iter` passes without the residual
/// dropping below `tol`.
pub fn solve_fixed_point(
    params: &MeshParams,
    tol: f64,
    max_iter: u32,
) -> Result<MeshSolution, MeshError> {
    params.validate()?;
    if !(tol > 0.0) || max_iter == 0 {
        return Err(MeshError::InvalidParams(format!(
            "need positive tolerance and at least one iteration, got {tol} / {max_iter}"
        )));
    }
    let ratio = params.arrival_rate / params.service_rate;
    let mut occ_h = 1e-6f64;
    let mut occ_v = 1e-6f64;
    for iteration in 1..=max_iter {
        let p_right = right_prob(
            occ_h,
            occ_v,
            params.horizontal_primary_prob,
            params.preference,
            params.variant,
        )?;
        let p_up = up_prob(
            occ_h,
            occ_v,
            params.horizontal_primary_prob,
            params.preference,
            params.variant,
        )?;
        let load_h = ratio * p_right;
        let load_v = ratio * p_up;
        let solution = |stable| MeshSolution {
            horizontal_occupancy: occ_h,
            vertical_occupancy: occ_v,
            horizontal_load: load_h,
            vertical_load: load_v,
            right_prob: p_right,
            up_prob: p_up,
            stable,
            iterations: iteration,
        };
        if load_h >= 1.0 || load_v >= 1.0 {
            return Ok(solution(false));
        }
        let target_h = load_h / (1.0 - load_h);
        let target_v = load_v / (1.0 - load_v);
        let residual = (occ_h - target_h).abs().max((occ_v - target_v).abs());
        if residual < tol {
            return Ok(solution(true));
        }
        occ_h = 0.5 * occ_h + 0.5 * target_h;
        occ_v = 0.5 * occ_v + 0.5 * target_v;
    }
    // Ran out of iterations: report the last iterate, flagged unstable.
    let p_right = right_prob(
        occ_h,
        occ_v,
        params.horizontal_primary_prob,
        params.preference,
        params.variant,
    )?;
    let p_up = up_prob(
        occ_h,
        occ_v,
        params.horizontal_primary_prob,
        params.preference,
        params.variant,
    )?;
    Ok(MeshSolution {
        horizontal_occupancy: occ_h,
        vertical_occupancy: occ_v,
        horizontal_load: ratio * p_right,
        vertical_load: ratio * p_up,
        right_prob: p_right,
        up_prob: p_up,
        stable: false,
        iterations: max_iter,
    })
}

/// Expected path delay in mean-queue units for a route with the given hop
/// counts: each hop contributes the mean occupancy of its link class.
///
/// Only a stable solution has a finite stationary delay; an unstable one is
/// rejected rather than quoted.
pub fn expected_path_delay(
    solution: &MeshSolution,
    hops_h: u32,
    hops_v: u32,
) -> Result<f64, MeshError> {
    if !solution.stable {
        return Err(MeshError::Unstable);
    }
    Ok(f64::from(hops_h) * solution.horizontal_occupancy
        + f64::from(hops_v) * solution.vertical_occupancy)
}

#[derive(Clone, Copy, Debug)]
pub struct MicroSimParams {
    pub torus_size: u32,
    /// Exogenous packet arrival rate per node.
    pub arrival_rate: f64,
    pub service_rate: f64,
    pub horizontal_primary_prob: f64,
    pub preference: f64,
    /// Total packets to generate across all nodes.
    pub packets: u64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MicroSimResult {
    pub horizontal_occupancy: f64,
    pub vertical_occupancy: f64,
    /// Set when occupancies kept climbing between the two halves of the
    /// measurement window — the empirical signature of an unstable load.
    pub diverging: bool,
}

#[derive(Clone, Copy)]
enum MicroEvent {
    /// Exogenous packet arrival at a node.
    Arrive(usize),
    /// Service completion on one output link.
    Done(usize, Direction),
}

struct MicroNode {
    queues: [std::collections::VecDeque<f64>; 4],
    busy: [bool; 4],
    stored: [f64; 4],
}

/// Replay the pure-metric probabilistic regime on a torus: every packet
/// takes exactly one hop (enter, queue, transmit, leave) and carries the
/// sender's metric to the receiving node. Queue occupancies are averaged
/// over time after a warm-up fifth of the run.
pub fn micro_sim(params: &MicroSimParams) -> MicroSimResult {
    let n = params.torus_size as usize;
    let nodes_total = n * n;
    assert!(n >= 2, "torus needs at least 2x2 nodes");
    if params.arrival_rate <= 0.0 || params.packets == 0 {
        return MicroSimResult {
            horizontal_occupancy: 0.0,
            vertical_occupancy: 0.0,
            diverging: false,
        };
    }

    let policy = PolicyParams {
        kind: PolicyKind::Probabilistic,
        // Pure-metric regime: every decision runs the probabilistic branch
        // on stored metrics alone, with unbounded buffers.
        queue_threshold: 0,
        buffer_capacity: u32::MAX,
        primary_preference: params.preference,
        neighbor_weight: 0.0,
        buffer_weight: 0.0,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let gap = Exp::new(params.arrival_rate).expect("positive rate");
    let service = Exp::new(params.service_rate).expect("positive rate");

    let mut nodes: Vec<MicroNode> = (0..nodes_total)
        .map(|_| MicroNode {
            queues: Default::default(),
            busy: [false; 4],
            stored: [0.0; 4],
        })
        .collect();

    let neighbor = |node: usize, dir: Direction| -> usize {
        let (row, col) = (node / n, node % n);
        let (row, col) = match dir {
            Direction::Up => ((row + 1) % n, col),
            Direction::Down => ((row + n - 1) % n, col),
            Direction::Right => (row, (col + 1) % n),
            Direction::Left => (row, (col + n - 1) % n),
        };
        row * n + col
    };

    let mut events: EventQueue<MicroEvent> = EventQueue::new();
    for node in 0..nodes_total {
        events.push(gap.sample(&mut rng), MicroEvent::Arrive(node));
    }

    // Time-weighted queue totals split into [warmup, mid) and [mid, end).
    let horizon = params.packets as f64 / (params.arrival_rate * nodes_total as f64);
    let warmup = 0.2 * horizon;
    let mid = warmup + 0.5 * (horizon - warmup);
    let mut total_h = 0i64;
    let mut total_v = 0i64;
    let mut integrals = [[0.0f64; 2]; 2]; // [orientation][half]
    let mut clock = 0.0f64;

    let advance = |clock: &mut f64, to: f64, total_h: i64, total_v: i64, integrals: &mut [[f64; 2]; 2]| {
        let from = *clock;
        *clock = to;
        for (orientation, total) in [(0usize, total_h), (1usize, total_v)] {
            if total == 0 {
                continue;
            }
            let weight = total as f64;
            let lo1 = from.max(warmup);
            let hi1 = to.min(mid);
            if hi1 > lo1 {
                integrals[orientation][0] += weight * (hi1 - lo1);
            }
            let lo2 = from.max(mid);
            if to > lo2 {
                integrals[orientation][1] += weight * (to - lo2);
            }
        }
    };

    let mut generated = 0u64;
    let end_time;
    loop {
        let (time, event) = events.pop().expect("ran out of events before the packet budget");
        advance(&mut clock, time, total_h, total_v, &mut integrals);
        match event {
            MicroEvent::Arrive(node) => {
                generated += 1;
                // Primary orientation, primary side, secondary side.
                let horizontal = rng.gen::<f64>() < params.horizontal_primary_prob;
                let flip_primary = rng.gen::<f64>() < 0.5;
                let flip_secondary = rng.gen::<f64>() < 0.5;
                let (primary, secondary) = if horizontal {
                    (
                        if flip_primary { Direction::Right } else { Direction::Left },
                        if flip_secondary { Direction::Up } else { Direction::Down },
                    )
                } else {
                    (
                        if flip_primary { Direction::Up } else { Direction::Down },
                        if flip_secondary { Direction::Right } else { Direction::Left },
                    )
                };
                let choice = HopChoice { primary, secondary: Some(secondary) };

                let state = &nodes[node];
                let mut view = NeighborView::default();
                for dir in Direction::ALL {
                    view.queue_len[dir] = state.queues[dir.index()].len() as u32;
                    view.stored_metric[dir] = state.stored[dir.index()];
                    view.link_live[dir] = true;
                }
                let draw = rng.gen::<f64>();
                let out = choose_probabilistic(&view, &choice, &policy, draw);
                let header = outgoing_metric(&view, out, policy.neighbor_weight);

                let state = &mut nodes[node];
                state.queues[out.index()].push_back(header);
                if out.is_vertical() {
                    total_v += 1;
                } else {
                    total_h += 1;
                }
                if !state.busy[out.index()] {
                    state.busy[out.index()] = true;
                    events.push(time + service.sample(&mut rng), MicroEvent::Done(node, out));
                }
                if generated == params.packets {
                    end_time = time;
                    break;
                }
                events.push(time + gap.sample(&mut rng), MicroEvent::Arrive(node));
            }
            MicroEvent::Done(node, dir) => {
                let state = &mut nodes[node];
                let header = state.queues[dir.index()].pop_front().expect("busy link has a head packet");
                if dir.is_vertical() {
                    total_v -= 1;
                } else {
                    total_h -= 1;
                }
                if state.queues[dir.index()].is_empty() {
                    state.busy[dir.index()] = false;
                } else {
                    events.push(time + service.sample(&mut rng), MicroEvent::Done(node, dir));
                }
                // The packet exits here; its header metric updates the
                // receiver's view of the link back toward the sender.
                let dst = neighbor(node, dir);
                nodes[dst].stored[dir.opposite().index()] = header;
            }
        }
    }

    let queues_per_orientation = (2 * nodes_total) as f64;
    let d1 = (end_time.min(mid) - warmup).max(0.0);
    let d2 = (end_time - mid).max(0.0);
    let avg = |orientation: usize| {
        let total = integrals[orientation][0] + integrals[orientation][1];
        if d1 + d2 > 0.0 {
            total / ((d1 + d2) * queues_per_orientation)
        } else {
            0.0
        }
    };
    let half = |orientation: usize, idx: usize, dur: f64| {
        if dur > 0.0 {
            integrals[orientation][idx] / (dur * queues_per_orientation)
        } else {
            0.0
        }
    };
    let mut diverging = false;
    for orientation in 0..2 {
        let first = half(orientation, 0, d1);
        let second = half(orientation, 1, d2);
        if d1 > 0.0 && d2 > 0.0 && second > 1.5 * first + 0.5 {
            diverging = true;
        }
    }

    MicroSimResult {
        horizontal_occupancy: avg(0),
        vertical_occupancy: avg(1),
        diverging,
    }
}
