//! Discrete-event simulation of a constellation sub-region.
//!
//! The simulated world is a rectangle of grid nodes; links leaving the
//! rectangle do not exist, exactly like polar link shutdown. Every node owns
//! four independent output links, each a FIFO queue with one transmitter:
//! reception never blocks, so a node is fully described by its four queues
//! plus the last traffic metric heard from each neighbor. Traffic arrives in
//! generation windows: every `t_step` seconds a fresh set of source →
//! destination flows is drawn and each flow injects a burst of packets with
//! exponential spacing. After the generation phase the event loop keeps
//! draining until the network is empty, so every generated packet is
//! accounted as delivered or dropped.
//!
//! Determinism: all randomness flows from two ChaCha streams derived from
//! the run seed — one for traffic (flow draws, arrival gaps), one for
//! forwarding-policy draws. Runs that differ only in policy therefore see
//! byte-identical traffic, which is what makes paired policy comparisons
//! sharp. Event ties are broken by insertion order.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::congestion::{
    choose_probabilistic, choose_threshold, outgoing_metric, NeighborView, PolicyKind,
    PolicyParams,
};
use crate::constellation::{ConstellationParams, DirMap, Direction, NodeId};
use crate::des::EventQueue;
use crate::routing::{enhance_direction, estimate_direction, HopChoice};

/// Salt for the policy RNG stream: keeps policy draws decorrelated from the
/// traffic stream while both derive from the one run seed.
const POLICY_STREAM_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("region topology is not routable: {0}")]
    Unreachable(String),
}

/// One simulation experiment, as read from a JSON config file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub constellation: ConstellationParams,
    /// Inclusive corner pair of the simulated rectangle.
    pub region: (NodeId, NodeId),
    /// Packet arrival rate within one flow, packets/s.
    pub lambda_in: f64,
    /// Spacing of traffic generation windows, s.
    #[serde(default = "default_t_step")]
    pub t_step: f64,
    /// Flows drawn per generation window.
    #[serde(default = "default_n_pairs")]
    pub n_pairs: u32,
    /// Packets injected per flow.
    #[serde(default = "default_n_packets")]
    pub n_packets: u32,
    #[serde(default = "default_packet_size")]
    pub packet_size_bits: u64,
    #[serde(default = "default_link_rate")]
    pub link_rate_bps: f64,
    pub policy: PolicyParams,
    /// Windows are generated while their start time lies below this, s.
    #[serde(default = "default_generation_duration")]
    pub generation_duration: f64,
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: u32,
    /// Loop guard: packets exceeding this hop count are dropped. Defaults to
    /// 4·(planes + slots), far above any shortest path.
    #[serde(default)]
    pub max_hops: Option<u32>,
}

fn default_t_step() -> f64 {
    0.1
}
fn default_n_pairs() -> u32 {
    10
}
fn default_n_packets() -> u32 {
    500
}
fn default_packet_size() -> u64 {
    8192
}
fn default_link_rate() -> f64 {
    2.5e7
}
fn default_generation_duration() -> f64 {
    1.0
}
fn default_replications() -> u32 {
    20
}

impl SimConfig {
    /// Region corners in normalized (low, high) order. The rectangle never
    /// wraps: corners are sorted per coordinate.
    pub fn region_bounds(&self) -> (NodeId, NodeId) {
        let (a, b) = self.region;
        (
            NodeId::new(a.plane.min(b.plane), a.slot.min(b.slot)),
            NodeId::new(a.plane.max(b.plane), a.slot.max(b.slot)),
        )
    }

    /// All region nodes in (plane, slot) lexicographic order.
    pub fn region_nodes(&self) -> Vec<NodeId> {
        let (lo, hi) = self.region_bounds();
        let mut nodes = Vec::new();
        for plane in lo.plane..=hi.plane {
            for slot in lo.slot..=hi.slot {
                nodes.push(NodeId::new(plane, slot));
            }
        }
        nodes
    }

    pub fn loop_guard(&self) -> u32 {
        self.max_hops
            .unwrap_or(4 * (self.constellation.n_planes + self.constellation.sats_per_plane))
    }

    /// Transmission time of one packet on one link, s.
    pub fn t_tx(&self) -> f64 {
        self.packet_size_bits as f64 / self.link_rate_bps
    }

    /// Check everything that can be checked before running: parameter
    /// ranges, then that the preferred route between every ordered node pair
    /// stays inside the region and reaches its destination.
    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |m: String| Err(SimError::Config(m));
        self.constellation
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        self.policy
            .validate()
            .map_err(SimError::Config)?;
        for corner in [self.region.0, self.region.1] {
            if !self.constellation.contains(corner) {
                return fail(format!("region corner {corner} lies outside the grid"));
            }
        }
        if !(self.lambda_in >= 0.0) || !self.lambda_in.is_finite() {
            return fail(format!("flow rate must be finite and nonnegative, got {}", self.lambda_in));
        }
        if !(self.t_step > 0.0) {
            return fail(format!("window spacing must be positive, got {}", self.t_step));
        }
        if !(self.generation_duration >= 0.0) {
            return fail(format!(
                "generation duration must be nonnegative, got {}",
                self.generation_duration
            ));
        }
        if self.packet_size_bits == 0 {
            return fail("packet size must be positive".into());
        }
        if !(self.link_rate_bps > 0.0) {
            return fail(format!("link rate must be positive, got {}", self.link_rate_bps));
        }
        if self.replications == 0 {
            return fail("need at least one replication".into());
        }
        let nodes = self.region_nodes();
        let ordered_pairs = nodes.len() * (nodes.len() - 1);
        if self.n_pairs as usize > ordered_pairs {
            return fail(format!(
                "cannot draw {} distinct flows from {} nodes ({} ordered pairs)",
                self.n_pairs,
                nodes.len(),
                ordered_pairs
            ));
        }

        // Routability: walk the preferred (primary-only) route for every
        // ordered pair. This covers every (location, destination) state a
        // packet can reach, because alternative hops also follow the plan.
        // The walk bound is topology-derived, not the configured hop budget:
        // a tight budget is a packet-lifetime policy, not a broken region.
        let walk_bound =
            4 * (self.constellation.n_planes + self.constellation.sats_per_plane);
        let (lo, hi) = self.region_bounds();
        let in_region = |n: NodeId| {
            (lo.plane..=hi.plane).contains(&n.plane) && (lo.slot..=hi.slot).contains(&n.slot)
        };
        for &src in &nodes {
            for &dst in &nodes {
                if src == dst {
                    continue;
                }
                let mut at = src;
                let mut hops = 0u32;
                while at != dst {
                    if hops >= walk_bound {
                        return Err(SimError::Unreachable(format!(
                            "route {src} -> {dst} exceeds the {walk_bound}-hop routability bound"
                        )));
                    }
                    let stalled = |e: crate::routing::RoutingError| {
                        SimError::Unreachable(format!("route {src} -> {dst} stalls at {at}: {e}"))
                    };
                    let spec = estimate_direction(&self.constellation, at, dst).map_err(stalled)?;
                    let choice =
                        enhance_direction(&self.constellation, at, dst, &spec).map_err(stalled)?;
                    let next = self
                        .constellation
                        .neighbors(at)
                        .map_err(|e| SimError::Config(e.to_string()))?[choice.primary]
                        .expect("preferred direction always has a live link");
                    if !in_region(next) {
                        return Err(SimError::Unreachable(format!(
                            "route {src} -> {dst} leaves the region at {at} (toward {next})"
                        )));
                    }
                    at = next;
                    hops += 1;
                }
            }
        }
        Ok(())
    }
}

/// Totals of one simulation run. All means are over delivered packets;
/// a run with no deliveries reports zero means.
#[derive(Clone, Debug, PartialEq)]
pub struct SimStats {
    pub generated: u64,
    pub delivered: u64,
    /// Dropped at a full buffer.
    pub dropped_overflow: u64,
    /// Dropped by the loop guard.
    pub dropped_loop: u64,
    pub mean_e2e_delay_s: f64,
    pub mean_prop_delay_s: f64,
    /// Mean accumulated queue waiting time (excludes transmission time).
    pub mean_queue_wait_s: f64,
    /// Largest queue occupancy seen on any link, in-service packet included.
    pub max_queue_len: u32,
    /// Mean end-to-end delay per (src, dst) flow, delivered packets only.
    pub per_flow_delay_s: BTreeMap<(NodeId, NodeId), f64>,
}

impl SimStats {
    pub fn dropped(&self) -> u64 {
        self.dropped_overflow + self.dropped_loop
    }
}

struct Packet {
    id: u64,
    src: NodeId,
    dst: NodeId,
    created_at: f64,
    /// Traffic metric of the last transmitter, carried in the header.
    header_metric: f64,
    hop_count: u32,
    queue_wait: f64,
    prop_accum: f64,
    enqueued_at: f64,
}

enum Event {
    /// Generation window `k`, fired at `k * t_step`.
    Window(u32),
    /// A freshly generated packet enters the network at its source.
    Source(Packet),
    /// A packet finishes propagating and reaches `node`; `from` is the
    /// receiving link, i.e. the direction back toward the sender.
    Arrive { node: usize, from: Direction, packet: Packet },
    /// The transmitter of `node`'s `dir` queue finishes the head packet.
    TxDone { node: usize, dir: Direction },
}

#[derive(Default)]
struct NodeState {
    /// Head of a busy queue is the packet in transmission.
    queues: DirMap<VecDeque<Packet>>,
    busy: DirMap<bool>,
    /// Last traffic metric received from each neighbor, zero before contact.
    stored_metric: DirMap<f64>,
}

struct Engine<'c> {
    cfg: &'c SimConfig,
    ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    /// In-region neighbor of each node per direction (None = absent link).
    links: Vec<DirMap<Option<usize>>>,
    /// Propagation delay of each live link, s.
    prop: Vec<DirMap<f64>>,
    nodes: Vec<NodeState>,
    routes: HashMap<(usize, NodeId), HopChoice>,
    events: EventQueue<Event>,
    traffic_rng: ChaCha8Rng,
    policy_rng: ChaCha8Rng,
    t_tx: f64,
    guard: u32,

    generated: u64,
    delivered: u64,
    dropped_overflow: u64,
    dropped_loop: u64,
    sum_e2e: f64,
    sum_prop: f64,
    sum_wait: f64,
    max_queue: u32,
    flows: BTreeMap<(NodeId, NodeId), (u64, f64)>,
    next_packet_id: u64,
}

/// Run one replication. The caller picks the seed (replication k of an
/// experiment uses `config.seed + k`), so a config is a family of runs.
pub fn run(config: &SimConfig, seed: u64) -> Result<SimStats, SimError> {
    config.validate()?;
    let mut engine = Engine::new(config, seed);
    engine.prime();
    while let Some((now, event)) = engine.events.pop() {
        match event {
            Event::Window(k) => engine.on_window(now, k),
            Event::Source(packet) => {
                engine.generated += 1;
                let at = engine.index[&packet.src];
                engine.forward(now, at, packet);
            }
            Event::Arrive { node, from, packet } => {
                engine.nodes[node].stored_metric[from] = packet.header_metric;
                engine.forward(now, node, packet);
            }
            Event::TxDone { node, dir } => engine.on_tx_done(now, node, dir),
        }
    }
    Ok(engine.finish())
}

impl<'c> Engine<'c> {
    fn new(cfg: &'c SimConfig, seed: u64) -> Self {
        let params = &cfg.constellation;
        let ids = cfg.region_nodes();
        let index: HashMap<NodeId, usize> =
            ids.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let links: Vec<DirMap<Option<usize>>> = ids
            .iter()
            .map(|&n| {
                let nbrs = params.neighbors(n).expect("validated node");
                DirMap::from_fn(|d| nbrs[d].and_then(|m| index.get(&m).copied()))
            })
            .collect();
        let prop: Vec<DirMap<f64>> = ids
            .iter()
            .zip(&links)
            .map(|(&n, link)| {
                DirMap::from_fn(|d| match link[d] {
                    Some(m) => params.prop_delay_s(n, ids[m]).expect("live link"),
                    None => 0.0,
                })
            })
            .collect();
        let nodes = ids.iter().map(|_| NodeState::default()).collect();
        Engine {
            cfg,
            index,
            links,
            prop,
            nodes,
            routes: HashMap::new(),
            events: EventQueue::new(),
            traffic_rng: ChaCha8Rng::seed_from_u64(seed),
            policy_rng: ChaCha8Rng::seed_from_u64(seed ^ POLICY_STREAM_SALT),
            t_tx: cfg.t_tx(),
            guard: cfg.loop_guard(),
            generated: 0,
            delivered: 0,
            dropped_overflow: 0,
            dropped_loop: 0,
            sum_e2e: 0.0,
            sum_prop: 0.0,
            sum_wait: 0.0,
            max_queue: 0,
            flows: BTreeMap::new(),
            next_packet_id: 0,
            ids,
        }
    }

    fn prime(&mut self) {
        if self.cfg.generation_duration > 0.0 {
            self.events.push(0.0, Event::Window(0));
        }
    }

    /// Draw this window's flows and schedule their packet injections.
    fn on_window(&mut self, now: f64, k: u32) {
        let n = self.ids.len();
        let pairs = rand::seq::index::sample(
            &mut self.traffic_rng,
            n * (n - 1),
            self.cfg.n_pairs as usize,
        );
        if self.cfg.lambda_in > 0.0 && self.cfg.n_packets > 0 {
            let gap = Exp::new(self.cfg.lambda_in).expect("positive rate");
            for pair_idx in pairs.iter() {
                // Ordered pairs (a, b), a ≠ b, laid out as a·(n−1) blocks
                // with the diagonal skipped inside each block.
                let a = pair_idx / (n - 1);
                let rem = pair_idx % (n - 1);
                let b = rem + usize::from(rem >= a);
                let (src, dst) = (self.ids[a], self.ids[b]);
                let mut t = now;
                for _ in 0..self.cfg.n_packets {
                    t += gap.sample(&mut self.traffic_rng);
                    let packet = Packet {
                        id: self.next_packet_id,
                        src,
                        dst,
                        created_at: t,
                        header_metric: 0.0,
                        hop_count: 0,
                        queue_wait: 0.0,
                        prop_accum: 0.0,
                        enqueued_at: t,
                    };
                    self.next_packet_id += 1;
                    self.events.push(t, Event::Source(packet));
                }
            }
        }
        let next_start = f64::from(k + 1) * self.cfg.t_step;
        if next_start < self.cfg.generation_duration {
            self.events.push(next_start, Event::Window(k + 1));
        }
    }

    /// Per-hop decision at `node`: deliver, drop, or pick a queue and join it.
    fn forward(&mut self, now: f64, node: usize, mut packet: Packet) {
        let here = self.ids[node];
        if here == packet.dst {
            let e2e = now - packet.created_at;
            let parts = packet.queue_wait + f64::from(packet.hop_count) * self.t_tx + packet.prop_accum;
            assert!(
                (e2e - parts).abs() <= 1e-9,
                "delay decomposition of packet {} is off: e2e {e2e} vs parts {parts}",
                packet.id
            );
            self.delivered += 1;
            self.sum_e2e += e2e;
            self.sum_prop += packet.prop_accum;
            self.sum_wait += packet.queue_wait;
            let flow = self.flows.entry((packet.src, packet.dst)).or_insert((0, 0.0));
            flow.0 += 1;
            flow.1 += e2e;
            return;
        }
        if packet.hop_count >= self.guard {
            self.dropped_loop += 1;
            return;
        }

        let choice = self.route(node, packet.dst);
        let state = &self.nodes[node];
        let view = NeighborView {
            queue_len: DirMap::from_fn(|d| state.queues[d].len() as u32),
            stored_metric: state.stored_metric,
            link_live: DirMap::from_fn(|d| self.links[node][d].is_some()),
        };
        let out = match self.cfg.policy.kind {
            PolicyKind::Threshold => choose_threshold(&view, &choice, &self.cfg.policy),
            PolicyKind::Probabilistic => {
                let draw = self.policy_rng.gen::<f64>();
                choose_probabilistic(&view, &choice, &self.cfg.policy, draw)
            }
        };

        if view.queue_len[out] >= self.cfg.policy.buffer_capacity {
            self.dropped_overflow += 1;
            return;
        }
        packet.header_metric = outgoing_metric(&view, out, self.cfg.policy.neighbor_weight);
        packet.enqueued_at = now;
        let state = &mut self.nodes[node];
        state.queues[out].push_back(packet);
        self.max_queue = self.max_queue.max(state.queues[out].len() as u32);
        if !state.busy[out] {
            // Idle transmitter: service starts immediately, zero queue wait.
            state.busy[out] = true;
            self.events.push(now + self.t_tx, Event::TxDone { node, dir: out });
        }
    }

    fn on_tx_done(&mut self, now: f64, node: usize, dir: Direction) {
        let state = &mut self.nodes[node];
        let mut packet = state.queues[dir].pop_front().expect("busy link has a head packet");
        if let Some(next) = state.queues[dir].front_mut() {
            next.queue_wait += now - next.enqueued_at;
            self.events.push(now + self.t_tx, Event::TxDone { node, dir });
        } else {
            state.busy[dir] = false;
        }
        packet.hop_count += 1;
        let dst = self.links[node][dir].expect("transmitted on a live link");
        let prop = self.prop[node][dir];
        packet.prop_accum += prop;
        self.events.push(
            now + prop,
            Event::Arrive { node: dst, from: dir.opposite(), packet },
        );
    }

    /// Plan-following hop choice, with links leaving the region treated as
    /// absent. Pure in (node, dst), so memoized.
    fn route(&mut self, node: usize, dst: NodeId) -> HopChoice {
        if let Some(&c) = self.routes.get(&(node, dst)) {
            return c;
        }
        let spec = estimate_direction(&self.cfg.constellation, self.ids[node], dst)
            .expect("validated: region nodes are distinct and in the grid");
        let choice = enhance_direction(&self.cfg.constellation, self.ids[node], dst, &spec)
            .expect("validated: every in-region pair is routable");
        let filtered = HopChoice {
            primary: choice.primary,
            secondary: choice.secondary.filter(|&d| self.links[node][d].is_some()),
        };
        assert!(
            self.links[node][filtered.primary].is_some(),
            "validated: preferred routes stay inside the region"
        );
        self.routes.insert((node, dst), filtered);
        filtered
    }

    fn finish(self) -> SimStats {
        assert_eq!(
            self.generated,
            self.delivered + self.dropped_overflow + self.dropped_loop,
            "packet conservation broke"
        );
        let mean = |sum: f64| if self.delivered > 0 { sum / self.delivered as f64 } else { 0.0 };
        SimStats {
            generated: self.generated,
            delivered: self.delivered,
            dropped_overflow: self.dropped_overflow,
            dropped_loop: self.dropped_loop,
            mean_e2e_delay_s: mean(self.sum_e2e),
            mean_prop_delay_s: mean(self.sum_prop),
            mean_queue_wait_s: mean(self.sum_wait),
            max_queue_len: self.max_queue,
            per_flow_delay_s: self
                .flows
                .into_iter()
                .map(|(flow, (count, sum))| (flow, sum / count as f64))
                .collect(),
        }
    }
}
