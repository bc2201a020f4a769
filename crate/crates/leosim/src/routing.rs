//! Hop-minimal direction estimation and primary/secondary enhancement.
//!
//! Routing happens on the virtual-node grid in two stages. *Estimation*
//! computes how many inter-plane and intra-plane hops separate source and
//! destination and in which ring directions. The inter-plane count is fixed
//! (plane indices never wrap across the seam); the intra-plane plan is the
//! cheaper of the two ring arcs, which may pass over a pole, plus a small
//! out-and-back detour when both endpoints sit inside a polar cap and the
//! inter-plane hops have to be made below it. *Enhancement* turns the
//! estimate at the current node into a primary forwarding direction and an
//! optional orthogonal secondary: directions that no longer lie on a
//! shortest path (dead inter-plane links, vertical moves that would strand
//! pending inter-plane hops inside a cap) are filtered out, and among the
//! survivors the vertical one leads while it climbs poleward, so that the
//! deferred inter-plane hops run over the shorter high-latitude links.

use thiserror::Error;

use crate::constellation::{ConstellationParams, Direction, NodeId, TopologyError};

#[derive(Debug, Error, PartialEq)]
pub enum RoutingError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("source equals destination {0}")]
    DegeneratePath(NodeId),
    #[error("no outgoing direction makes progress from {at} toward {dst}")]
    DeadEnd { at: NodeId, dst: NodeId },
}

/// Inter-plane travel direction. `East` is toward higher plane indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HorizontalDir {
    East,
    West,
}

impl HorizontalDir {
    pub fn direction(self) -> Direction {
        match self {
            HorizontalDir::East => Direction::Right,
            HorizontalDir::West => Direction::Left,
        }
    }
}

/// Intra-plane travel direction. `North` is toward higher slot indices,
/// the direction of orbital motion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerticalDir {
    North,
    South,
}

impl VerticalDir {
    pub fn direction(self) -> Direction {
        match self {
            VerticalDir::North => Direction::Up,
            VerticalDir::South => Direction::Down,
        }
    }

    fn opposite(self) -> VerticalDir {
        match self {
            VerticalDir::North => VerticalDir::South,
            VerticalDir::South => VerticalDir::North,
        }
    }
}

/// Remaining travel plan from a node toward a destination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathSpec {
    pub horizontal_hops: u32,
    pub vertical_hops: u32,
    pub horizontal_dir: Option<HorizontalDir>,
    /// Direction of the first vertical move of the plan. For a plain ring
    /// arc this is the arc direction; for a cap detour that must back out
    /// behind the source first, it is the exit direction.
    pub vertical_dir: Option<VerticalDir>,
    /// True when the planned vertical walk passes over a pole (as opposed to
    /// merely ending on a pole slot).
    pub crosses_pole: bool,
}

impl PathSpec {
    pub fn total_hops(&self) -> u32 {
        self.horizontal_hops + self.vertical_hops
    }
}

/// Forwarding directions for the next hop: the preferred link and, when the
/// plan still moves in both grid dimensions, the orthogonal alternative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HopChoice {
    pub primary: Direction,
    pub secondary: Option<Direction>,
}

/// One intra-plane travel plan candidate.
#[derive(Clone, Copy, Debug)]
struct VerticalPlan {
    hops: u32,
    first: Option<VerticalDir>,
    crosses: bool,
}

fn step_slot(m: u32, slot: u32, dir: VerticalDir) -> u32 {
    match dir {
        VerticalDir::North => (slot + 1) % m,
        VerticalDir::South => (slot + m - 1) % m,
    }
}

/// Does a monotone sweep of `hops` slots starting at `start` pass strictly
/// over a pole? Poles sit at quarter and three-quarter orbit; working in
/// quarter-slot integer units keeps the test exact for every plane size.
fn sweep_crosses_pole(m: u32, start: u32, dir: VerticalDir, hops: u32) -> bool {
    if hops == 0 {
        return false;
    }
    let period = 4 * i64::from(m);
    let a = 4 * i64::from(start);
    let (lo, hi) = match dir {
        VerticalDir::North => (a, a + 4 * i64::from(hops)),
        VerticalDir::South => (a - 4 * i64::from(hops), a),
    };
    for pole in [i64::from(m), 3 * i64::from(m)] {
        let mut j = (lo - pole).div_euclid(period);
        loop {
            let x = pole + j * period;
            if x >= hi {
                break;
            }
            if x > lo {
                return true;
            }
            j += 1;
        }
    }
    false
}

/// Hops from `from` in `dir` until the first slot below the polar threshold.
fn hops_to_nonpolar(params: &ConstellationParams, from: u32, dir: VerticalDir) -> u32 {
    let m = params.sats_per_plane;
    let mut slot = from;
    for k in 1..=m {
        slot = step_slot(m, slot, dir);
        if params.slot_latitude_deg(slot).abs() <= params.polar_threshold_deg {
            return k;
        }
    }
    unreachable!("every plane has a sub-threshold slot (slot 0 sits on the equator)");
}

fn arc_all_polar(params: &ConstellationParams, start: u32, dir: VerticalDir, len: u32) -> bool {
    let m = params.sats_per_plane;
    let mut slot = start;
    for _ in 0..=len {
        if params.slot_latitude_deg(slot).abs() <= params.polar_threshold_deg {
            return false;
        }
        slot = step_slot(m, slot, dir);
    }
    true
}

fn vertical_plan(
    params: &ConstellationParams,
    src_slot: u32,
    dst_slot: u32,
    dir: VerticalDir,
    needs_lateral: bool,
) -> VerticalPlan {
    let m = params.sats_per_plane;
    let len = match dir {
        VerticalDir::North => (dst_slot + m - src_slot) % m,
        VerticalDir::South => (src_slot + m - dst_slot) % m,
    };
    if !needs_lateral || !arc_all_polar(params, src_slot, dir, len) {
        return VerticalPlan {
            hops: len,
            first: if len > 0 { Some(dir) } else { None },
            crosses: sweep_crosses_pole(m, src_slot, dir, len),
        };
    }
    // Both endpoints (and everything between) sit inside a polar cap while
    // inter-plane hops remain: extend the walk to the nearest slot with live
    // lateral links and double back. Overshooting past the destination keeps
    // the walk monotone; backing out behind the source is used when shorter.
    let overshoot = hops_to_nonpolar(params, dst_slot, dir);
    let backout = hops_to_nonpolar(params, src_slot, dir.opposite());
    if overshoot <= backout {
        VerticalPlan {
            hops: len + 2 * overshoot,
            first: Some(dir),
            crosses: sweep_crosses_pole(m, src_slot, dir, len + overshoot),
        }
    } else {
        let turn = (match dir {
            VerticalDir::North => src_slot + (m - backout % m) % m,
            VerticalDir::South => src_slot + backout,
        }) % m;
        VerticalPlan {
            hops: len + 2 * backout,
            first: Some(dir.opposite()),
            crosses: sweep_crosses_pole(m, src_slot, dir.opposite(), backout)
                || sweep_crosses_pole(m, turn, dir, backout + len),
        }
    }
}

/// Estimate the hop-minimal travel plan from `src` to `dst`.
///
/// Candidates combine the fixed inter-plane distance with each of the two
/// ring arcs; ties prefer the arc that does not cross a pole, then north
/// over south.
pub fn estimate_direction(
    params: &ConstellationParams,
    src: NodeId,
    dst: NodeId,
) -> Result<PathSpec, RoutingError> {
    for n in [src, dst] {
        if !params.contains(n) {
            return Err(TopologyError::InvalidNode(n).into());
        }
    }
    if src == dst {
        return Err(RoutingError::DegeneratePath(src));
    }

    let dp = i64::from(dst.plane) - i64::from(src.plane);
    let horizontal_hops = dp.unsigned_abs() as u32;
    let horizontal_dir = if dp > 0 {
        Some(HorizontalDir::East)
    } else if dp < 0 {
        Some(HorizontalDir::West)
    } else {
        None
    };

    let plan = [VerticalDir::North, VerticalDir::South]
        .into_iter()
        .map(|dir| vertical_plan(params, src.slot, dst.slot, dir, horizontal_hops > 0))
        .min_by_key(|p| {
            let dir_rank = match p.first {
                None | Some(VerticalDir::North) => 0,
                Some(VerticalDir::South) => 1,
            };
            (p.hops, p.crosses, dir_rank)
        })
        .expect("two candidates");

    Ok(PathSpec {
        horizontal_hops,
        vertical_hops: plan.hops,
        horizontal_dir,
        vertical_dir: plan.first,
        crosses_pole: plan.crosses,
    })
}

/// Turn the travel plan at `current` into primary/secondary link choices.
///
/// A planned direction survives only if its link is live and the move lands
/// one hop closer to `dst` (this rules out dead inter-plane links at polar
/// or seam nodes, and vertical moves into a cap that would strand pending
/// inter-plane hops). If both dimensions survive, the vertical move leads
/// while it strictly climbs in |latitude| and trails otherwise.
pub fn enhance_direction(
    params: &ConstellationParams,
    current: NodeId,
    dst: NodeId,
    spec: &PathSpec,
) -> Result<HopChoice, RoutingError> {
    let nbrs = params.neighbors(current)?;
    let total = spec.total_hops();

    let surviving = |dir: Option<Direction>| -> Result<Option<Direction>, RoutingError> {
        let Some(dir) = dir else { return Ok(None) };
        let Some(next) = nbrs[dir] else { return Ok(None) };
        let remaining = if next == dst {
            0
        } else {
            estimate_direction(params, next, dst)?.total_hops()
        };
        Ok((remaining + 1 == total).then_some(dir))
    };

    let horizontal = surviving(spec.horizontal_dir.map(HorizontalDir::direction))?;
    let vertical = surviving(spec.vertical_dir.map(VerticalDir::direction))?;

    match (horizontal, vertical) {
        (Some(h), Some(v)) => {
            let here = params.slot_latitude_deg(current.slot).abs();
            let next = params
                .slot_latitude_deg(nbrs[v].expect("surviving link").slot)
                .abs();
            if next > here {
                Ok(HopChoice { primary: v, secondary: Some(h) })
            } else {
                Ok(HopChoice { primary: h, secondary: Some(v) })
            }
        }
        (Some(h), None) => Ok(HopChoice { primary: h, secondary: None }),
        (None, Some(v)) => Ok(HopChoice { primary: v, secondary: None }),
        (None, None) => Err(RoutingError::DeadEnd { at: current, dst }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference() -> ConstellationParams {
        ConstellationParams::polar(12, 24, 600.0)
    }

    /// Follow primary directions only, recomputing the plan at every node.
    fn walk_primary(params: &ConstellationParams, src: NodeId, dst: NodeId) -> u32 {
        let mut at = src;
        let mut hops = 0;
        while at != dst {
            let spec = estimate_direction(params, at, dst).unwrap();
            let choice = enhance_direction(params, at, dst, &spec).unwrap();
            at = params.neighbors(at).unwrap()[choice.primary].unwrap();
            hops += 1;
            assert!(
                hops <= 4 * (params.n_planes + params.sats_per_plane),
                "runaway walk {src} -> {dst}"
            );
        }
        hops
    }

    #[test]
    fn vertical_arc_selection() {
        let p = reference();
        let spec = estimate_direction(&p, NodeId::new(2, 3), NodeId::new(2, 9)).unwrap();
        assert_eq!(spec.horizontal_hops, 0);
        assert_eq!(spec.vertical_hops, 6);
        assert_eq!(spec.horizontal_dir, None);
        assert_eq!(spec.vertical_dir, Some(VerticalDir::North));
        assert!(spec.crosses_pole, "slots 3→9 pass over the north pole slot 6");

        let spec = estimate_direction(&p, NodeId::new(2, 9), NodeId::new(2, 3)).unwrap();
        assert_eq!(spec.vertical_hops, 6);
        assert_eq!(spec.vertical_dir, Some(VerticalDir::South));

        // Short arc that stays in mid-latitudes.
        let spec = estimate_direction(&p, NodeId::new(2, 1), NodeId::new(2, 4)).unwrap();
        assert_eq!(spec.vertical_hops, 3);
        assert!(!spec.crosses_pole);
    }

    #[test]
    fn horizontal_distance_respects_seam() {
        let p = reference();
        let spec = estimate_direction(&p, NodeId::new(3, 2), NodeId::new(5, 2)).unwrap();
        assert_eq!(spec.horizontal_hops, 2);
        assert_eq!(spec.horizontal_dir, Some(HorizontalDir::East));
        assert_eq!(spec.vertical_hops, 0);
        assert_eq!(spec.vertical_dir, None);

        // Plane 11 to plane 0 may not wrap: 11 hops west.
        let spec = estimate_direction(&p, NodeId::new(11, 2), NodeId::new(0, 2)).unwrap();
        assert_eq!(spec.horizontal_hops, 11);
        assert_eq!(spec.horizontal_dir, Some(HorizontalDir::West));
    }

    #[test]
    fn antipodal_tie_prefers_north() {
        let p = reference();
        let spec = estimate_direction(&p, NodeId::new(4, 0), NodeId::new(4, 12)).unwrap();
        assert_eq!(spec.vertical_hops, 12);
        assert_eq!(spec.vertical_dir, Some(VerticalDir::North));
    }

    #[test]
    fn cap_detour_when_both_endpoints_polar() {
        let p = reference();
        // Both on the pole slot: two extra vertical hops to reach a ring with
        // live inter-plane links.
        let spec = estimate_direction(&p, NodeId::new(2, 6), NodeId::new(4, 6)).unwrap();
        assert_eq!(spec.horizontal_hops, 2);
        assert_eq!(spec.vertical_hops, 2);
        assert_eq!(spec.vertical_dir, Some(VerticalDir::North));
        assert_eq!(walk_primary(&p, NodeId::new(2, 6), NodeId::new(4, 6)), 4);
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let p = reference();
        assert!(matches!(
            estimate_direction(&p, NodeId::new(2, 6), NodeId::new(2, 6)),
            Err(RoutingError::DegeneratePath(_))
        ));
        assert!(matches!(
            estimate_direction(&p, NodeId::new(2, 6), NodeId::new(2, 99)),
            Err(RoutingError::Topology(TopologyError::InvalidNode(_)))
        ));
    }

    #[test]
    fn enhancement_climbs_first() {
        let p = reference();
        // Climbing from 30° toward 60°: vertical leads, horizontal trails.
        let src = NodeId::new(2, 2);
        let dst = NodeId::new(5, 4);
        let spec = estimate_direction(&p, src, dst).unwrap();
        let choice = enhance_direction(&p, src, dst, &spec).unwrap();
        assert_eq!(choice.primary, Direction::Up);
        assert_eq!(choice.secondary, Some(Direction::Right));

        // Descending from 60° toward 30°: horizontal leads while high.
        let src = NodeId::new(2, 4);
        let dst = NodeId::new(5, 2);
        let spec = estimate_direction(&p, src, dst).unwrap();
        let choice = enhance_direction(&p, src, dst, &spec).unwrap();
        assert_eq!(choice.primary, Direction::Right);
        assert_eq!(choice.secondary, Some(Direction::Down));
    }

    #[test]
    fn enhancement_single_dimension_has_no_secondary() {
        let p = reference();
        let src = NodeId::new(2, 3);
        let dst = NodeId::new(2, 9);
        let spec = estimate_direction(&p, src, dst).unwrap();
        let choice = enhance_direction(&p, src, dst, &spec).unwrap();
        assert_eq!(choice.primary, Direction::Up);
        assert_eq!(choice.secondary, None);
    }

    #[test]
    fn enhancement_at_polar_node_is_vertical_only() {
        let p = reference();
        let src = NodeId::new(2, 6);
        let dst = NodeId::new(5, 8);
        let spec = estimate_direction(&p, src, dst).unwrap();
        assert!(spec.horizontal_hops > 0);
        let choice = enhance_direction(&p, src, dst, &spec).unwrap();
        assert_eq!(choice.primary, Direction::Up);
        assert_eq!(choice.secondary, None);
    }

    #[test]
    fn enhancement_does_not_enter_cap_with_lateral_work_left() {
        let p = reference();
        // Destination on the pole slot two planes over: the vertical move
        // from the 75° ring would strand the inter-plane hops, so the plan
        // goes sideways here and the cap is entered only on the last plane.
        let src = NodeId::new(2, 5);
        let dst = NodeId::new(4, 6);
        let spec = estimate_direction(&p, src, dst).unwrap();
        let choice = enhance_direction(&p, src, dst, &spec).unwrap();
        assert_eq!(choice.primary, Direction::Right);
        assert_eq!(choice.secondary, None);
        assert_eq!(walk_primary(&p, src, dst), spec.total_hops());
    }

    #[test]
    fn primary_walk_matches_estimate() {
        let p = reference();
        let cases = [
            (NodeId::new(2, 3), NodeId::new(7, 9)),
            (NodeId::new(0, 0), NodeId::new(11, 12)),
            (NodeId::new(3, 22), NodeId::new(9, 7)),
            (NodeId::new(5, 6), NodeId::new(5, 18)),
            (NodeId::new(1, 17), NodeId::new(10, 19)),
        ];
        for (src, dst) in cases {
            let spec = estimate_direction(&p, src, dst).unwrap();
            assert_eq!(walk_primary(&p, src, dst), spec.total_hops(), "{src} -> {dst}");
        }
    }

    proptest! {
        #[test]
        fn walks_terminate_in_exactly_estimated_hops(
            n in 3u32..13,
            m in 4u32..26,
            seed in any::<u64>(),
        ) {
            let params = ConstellationParams::polar(n, m, 600.0);
            let mut state = seed;
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 33) as u32
            };
            for _ in 0..8 {
                let src = NodeId::new(next() % n, next() % m);
                let dst = NodeId::new(next() % n, next() % m);
                if src == dst {
                    continue;
                }
                let spec = estimate_direction(&params, src, dst).unwrap();
                prop_assert_eq!(walk_primary(&params, src, dst), spec.total_hops());
            }
        }

        #[test]
        fn spec_fields_are_consistent(
            n in 3u32..13,
            m in 4u32..26,
            sp in 0u32..26,
            ss in 0u32..26,
            dp in 0u32..13,
            ds in 0u32..26,
        ) {
            let params = ConstellationParams::polar(n, m, 600.0);
            let src = NodeId::new(sp % n, ss % m);
            let dst = NodeId::new(dp % n, ds % m);
            prop_assume!(src != dst);
            let spec = estimate_direction(&params, src, dst).unwrap();
            prop_assert_eq!(spec.horizontal_hops == 0, spec.horizontal_dir.is_none());
            prop_assert_eq!(spec.vertical_hops == 0, spec.vertical_dir.is_none());
            prop_assert!(spec.total_hops() >= 1);

            let choice = enhance_direction(&params, src, dst, &spec).unwrap();
            if let Some(sec) = choice.secondary {
                prop_assert_ne!(sec, choice.primary);
                prop_assert_ne!(sec.is_vertical(), choice.primary.is_vertical());
                // Both choices come from the plan itself: never a reversal.
                let implied = [
                    spec.horizontal_dir.map(HorizontalDir::direction),
                    spec.vertical_dir.map(VerticalDir::direction),
                ];
                prop_assert!(implied.contains(&Some(sec)));
                prop_assert!(implied.contains(&Some(choice.primary)));
            }
        }
    }
}
