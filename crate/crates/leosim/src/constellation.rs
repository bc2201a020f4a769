//! Walker-star constellation geometry and inter-satellite link topology.
//!
//! The constellation is modeled as a grid of *virtual nodes*: (plane, slot)
//! names a position in the rotating constellation pattern, permanently
//! occupied by whichever physical satellite is passing through it. Ascending
//! orbit halves cover longitudes [0°, 180°), descending halves the antipodal
//! range, so the N planes tile the full sphere and plane 0 / plane N−1 fly
//! counter-rotating across the seam — which is why no inter-plane link wraps
//! around the plane index. Inter-plane links are also switched off while
//! their endpoints sit above the polar latitude threshold, where cross-plane
//! pointing changes too fast to track.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum, km/s.
pub const LIGHT_SPEED_KM_S: f64 = 299_792.458;

/// Mean Earth radius, km.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("invalid constellation parameters: {0}")]
    InvalidParams(String),
    #[error("node {0} lies outside the constellation grid")]
    InvalidNode(NodeId),
    #[error("nodes {0} and {1} are not link neighbors")]
    NotNeighbors(NodeId, NodeId),
}

/// Grid coordinates of a virtual node: orbital plane index and in-plane slot.
///
/// Serializes as the compact pair `[plane, slot]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub plane: u32,
    pub slot: u32,
}

impl NodeId {
    pub fn new(plane: u32, slot: u32) -> Self {
        NodeId { plane, slot }
    }
}

impl Serialize for NodeId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        (self.plane, self.slot).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let (plane, slot) = <(u32, u32)>::deserialize(deserializer)?;
        Ok(NodeId { plane, slot })
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.plane, self.slot)
    }
}

/// One of the four output link directions of a node.
///
/// `Up`/`Down` are intra-plane (slot +1 / −1, wrapping through the poles);
/// `Right`/`Left` are inter-plane (plane +1 / −1, never wrapping).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }

    pub fn is_vertical(self) -> bool {
        matches!(self, Direction::Up | Direction::Down)
    }

    pub fn index(self) -> usize {
        match self {
            Direction::Up => 0,
            Direction::Down => 1,
            Direction::Left => 2,
            Direction::Right => 3,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        };
        f.write_str(s)
    }
}

/// Fixed-size map keyed by [`Direction`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DirMap<T>([T; 4]);

impl<T> DirMap<T> {
    pub fn from_fn(mut f: impl FnMut(Direction) -> T) -> Self {
        DirMap([
            f(Direction::Up),
            f(Direction::Down),
            f(Direction::Left),
            f(Direction::Right),
        ])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Direction, &T)> {
        Direction::ALL.iter().map(move |&d| (d, &self.0[d.index()]))
    }
}

impl<T> Index<Direction> for DirMap<T> {
    type Output = T;
    fn index(&self, d: Direction) -> &T {
        &self.0[d.index()]
    }
}

impl<T> IndexMut<Direction> for DirMap<T> {
    fn index_mut(&mut self, d: Direction) -> &mut T {
        &mut self.0[d.index()]
    }
}

/// Geographic sub-satellite position of a virtual node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeoPosition {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub altitude_km: f64,
}

/// Shape of a polar Walker-star shell.
///
/// Only 90° inclination is supported: the grid geometry below (triangular
/// latitude profile, 180°/N plane spacing) is exact for polar orbits and
/// nothing else.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstellationParams {
    pub n_planes: u32,
    pub sats_per_plane: u32,
    pub altitude_km: f64,
    #[serde(default = "default_inclination")]
    pub inclination_deg: f64,
    /// Latitude (degrees, strict) above which inter-plane links shut down.
    #[serde(default = "default_polar_threshold")]
    pub polar_threshold_deg: f64,
    #[serde(default = "default_earth_radius")]
    pub earth_radius_km: f64,
    #[serde(default = "default_light_speed")]
    pub light_speed_km_s: f64,
}

fn default_inclination() -> f64 {
    90.0
}

fn default_polar_threshold() -> f64 {
    75.0
}

fn default_earth_radius() -> f64 {
    EARTH_RADIUS_KM
}

fn default_light_speed() -> f64 {
    LIGHT_SPEED_KM_S
}

impl ConstellationParams {
    /// Polar shell with the default thresholds and physical constants.
    pub fn polar(n_planes: u32, sats_per_plane: u32, altitude_km: f64) -> Self {
        ConstellationParams {
            n_planes,
            sats_per_plane,
            altitude_km,
            inclination_deg: default_inclination(),
            polar_threshold_deg: default_polar_threshold(),
            earth_radius_km: default_earth_radius(),
            light_speed_km_s: default_light_speed(),
        }
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        let fail = |msg: String| Err(TopologyError::InvalidParams(msg));
        if self.n_planes < 2 {
            return fail(format!("need at least 2 planes, got {}", self.n_planes));
        }
        if self.sats_per_plane < 3 {
            return fail(format!("need at least 3 slots per plane, got {}", self.sats_per_plane));
        }
        if !(self.altitude_km > 0.0) {
            return fail(format!("altitude must be positive, got {}", self.altitude_km));
        }
        if self.inclination_deg != 90.0 {
            return fail(format!(
                "only 90° (polar) shells are modeled, got inclination {}",
                self.inclination_deg
            ));
        }
        if !(self.polar_threshold_deg > 0.0 && self.polar_threshold_deg < 90.0) {
            return fail(format!(
                "polar threshold must lie strictly between 0° and 90°, got {}",
                self.polar_threshold_deg
            ));
        }
        if !(self.earth_radius_km > 0.0) || !(self.light_speed_km_s > 0.0) {
            return fail("physical constants must be positive".to_string());
        }
        Ok(())
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.plane < self.n_planes && node.slot < self.sats_per_plane
    }

    fn check_node(&self, node: NodeId) -> Result<(), TopologyError> {
        if self.contains(node) {
            Ok(())
        } else {
            Err(TopologyError::InvalidNode(node))
        }
    }

    /// Orbital phase of a slot, degrees in [0°, 360°).
    pub fn slot_angle_deg(&self, slot: u32) -> f64 {
        f64::from(slot) * 360.0 / f64::from(self.sats_per_plane)
    }

    /// Sub-satellite latitude of any node in `slot`: a triangular profile
    /// that sweeps 0° → 90° → 0° → −90° → 0° over one orbit.
    pub fn slot_latitude_deg(&self, slot: u32) -> f64 {
        let alpha = self.slot_angle_deg(slot).to_radians();
        alpha.sin().asin().to_degrees()
    }

    /// Whether `slot` lies on the ascending half of the orbit (the half flown
    /// on the plane's nominal meridian rather than the antipodal one).
    fn slot_ascending(&self, slot: u32) -> bool {
        let alpha = self.slot_angle_deg(slot);
        alpha <= 90.0 || alpha >= 270.0
    }

    pub fn node_position(&self, node: NodeId) -> Result<GeoPosition, TopologyError> {
        self.check_node(node)?;
        let lat_deg = self.slot_latitude_deg(node.slot);
        let base_lon = f64::from(node.plane) * 180.0 / f64::from(self.n_planes);
        let lon_deg = if self.slot_ascending(node.slot) {
            base_lon
        } else {
            base_lon - 180.0
        };
        Ok(GeoPosition {
            lat_deg,
            lon_deg,
            altitude_km: self.altitude_km,
        })
    }

    /// True when the node is above the polar latitude threshold (strictly),
    /// i.e. its inter-plane links are switched off.
    pub fn is_polar(&self, node: NodeId) -> Result<bool, TopologyError> {
        self.check_node(node)?;
        Ok(self.slot_latitude_deg(node.slot).abs() > self.polar_threshold_deg)
    }

    /// Live link neighbors of a node, by direction.
    ///
    /// Intra-plane links always exist; inter-plane links need both endpoints
    /// below the polar threshold (they share a slot, hence a latitude, so
    /// one test covers both) and never wrap across the seam.
    pub fn neighbors(&self, node: NodeId) -> Result<DirMap<Option<NodeId>>, TopologyError> {
        self.check_node(node)?;
        let m = self.sats_per_plane;
        let lateral_ok = !self.is_polar(node)?;
        let mut map = DirMap::from_fn(|_| None);
        map[Direction::Up] = Some(NodeId::new(node.plane, (node.slot + 1) % m));
        map[Direction::Down] = Some(NodeId::new(node.plane, (node.slot + m - 1) % m));
        if lateral_ok && node.plane + 1 < self.n_planes {
            map[Direction::Right] = Some(NodeId::new(node.plane + 1, node.slot));
        }
        if lateral_ok && node.plane > 0 {
            map[Direction::Left] = Some(NodeId::new(node.plane - 1, node.slot));
        }
        Ok(map)
    }

    /// Straight-line (chord) length of the link between two neighbor nodes.
    ///
    /// Intra-plane links subtend 360°/M of a circular orbit and have constant
    /// length; inter-plane links subtend the 180°/N plane spacing scaled by
    /// cos(latitude) as the meridians converge toward the poles.
    pub fn isl_length_km(&self, a: NodeId, b: NodeId) -> Result<f64, TopologyError> {
        self.check_node(a)?;
        self.check_node(b)?;
        let nbrs = self.neighbors(a)?;
        let dir = Direction::ALL
            .iter()
            .copied()
            .find(|&d| nbrs[d] == Some(b))
            .ok_or(TopologyError::NotNeighbors(a, b))?;
        let orbit_radius = self.earth_radius_km + self.altitude_km;
        let len = if dir.is_vertical() {
            let half_angle = std::f64::consts::PI / f64::from(self.sats_per_plane);
            2.0 * orbit_radius * half_angle.sin()
        } else {
            let half_angle = std::f64::consts::PI / (2.0 * f64::from(self.n_planes));
            let lat = self.slot_latitude_deg(a.slot).to_radians();
            2.0 * orbit_radius * half_angle.sin() * lat.cos()
        };
        Ok(len)
    }

    /// One-way propagation delay across a link, in seconds.
    pub fn prop_delay_s(&self, a: NodeId, b: NodeId) -> Result<f64, TopologyError> {
        Ok(self.isl_length_km(a, b)? / self.light_speed_km_s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::collections::HashSet;

    fn reference() -> ConstellationParams {
        ConstellationParams::polar(12, 24, 600.0)
    }

    #[test]
    fn position_examples() {
        let p = reference();
        let g = p.node_position(NodeId::new(3, 2)).unwrap();
        assert_relative_eq!(g.lat_deg, 30.0, epsilon = 1e-12);
        assert_relative_eq!(g.lon_deg, 45.0, epsilon = 1e-12);
        assert_relative_eq!(g.altitude_km, 600.0);

        // Slot 6 is the north-pole slot of a 24-slot plane.
        let pole = p.node_position(NodeId::new(0, 6)).unwrap();
        assert_relative_eq!(pole.lat_deg, 90.0, epsilon = 1e-12);

        // Descending half: same latitude as slot 2, antipodal meridian.
        let g = p.node_position(NodeId::new(3, 10)).unwrap();
        assert_relative_eq!(g.lat_deg, 30.0, epsilon = 1e-12);
        assert_relative_eq!(g.lon_deg, 45.0 - 180.0, epsilon = 1e-12);

        // Slot 23 sits just below the equator on the ascending side.
        let g = p.node_position(NodeId::new(3, 23)).unwrap();
        assert_relative_eq!(g.lat_deg, -15.0, epsilon = 1e-12);
        assert_relative_eq!(g.lon_deg, 45.0, epsilon = 1e-12);
    }

    #[test]
    fn positions_are_distinct_and_in_range() {
        for params in [reference(), ConstellationParams::polar(6, 8, 780.0)] {
            let mut seen = HashSet::new();
            for plane in 0..params.n_planes {
                for slot in 0..params.sats_per_plane {
                    let g = params.node_position(NodeId::new(plane, slot)).unwrap();
                    assert!((-90.0..=90.0).contains(&g.lat_deg));
                    assert!((-180.0..180.0).contains(&g.lon_deg));
                    assert!(seen.insert((g.lat_deg.to_bits(), g.lon_deg.to_bits())));
                }
            }
        }
    }

    #[test]
    fn polar_test_is_strict() {
        let p = reference();
        assert!(p.is_polar(NodeId::new(0, 6)).unwrap());
        // 75° is not *above* the 75° threshold.
        assert!(!p.is_polar(NodeId::new(0, 5)).unwrap());
        assert!(!p.is_polar(NodeId::new(0, 0)).unwrap());
        // South pole slot.
        assert!(p.is_polar(NodeId::new(0, 18)).unwrap());
    }

    #[test]
    fn neighbor_structure() {
        let p = reference();
        let n = p.neighbors(NodeId::new(3, 2)).unwrap();
        assert_eq!(n[Direction::Up], Some(NodeId::new(3, 3)));
        assert_eq!(n[Direction::Down], Some(NodeId::new(3, 1)));
        assert_eq!(n[Direction::Right], Some(NodeId::new(4, 2)));
        assert_eq!(n[Direction::Left], Some(NodeId::new(2, 2)));

        // Slot ring wraps.
        let n = p.neighbors(NodeId::new(3, 0)).unwrap();
        assert_eq!(n[Direction::Down], Some(NodeId::new(3, 23)));

        // Seam: plane indices never wrap.
        let n = p.neighbors(NodeId::new(0, 2)).unwrap();
        assert_eq!(n[Direction::Left], None);
        let n = p.neighbors(NodeId::new(11, 2)).unwrap();
        assert_eq!(n[Direction::Right], None);

        // Polar nodes keep intra-plane links only.
        let n = p.neighbors(NodeId::new(3, 6)).unwrap();
        assert_eq!(n[Direction::Left], None);
        assert_eq!(n[Direction::Right], None);
        assert_eq!(n[Direction::Up], Some(NodeId::new(3, 7)));
    }

    #[test]
    fn neighbor_relation_is_symmetric() {
        for params in [reference(), ConstellationParams::polar(6, 8, 780.0), ConstellationParams::polar(2, 3, 500.0)] {
            for plane in 0..params.n_planes {
                for slot in 0..params.sats_per_plane {
                    let a = NodeId::new(plane, slot);
                    for (d, nbr) in params.neighbors(a).unwrap().iter() {
                        if let Some(b) = nbr {
                            let back = params.neighbors(*b).unwrap();
                            assert_eq!(back[d.opposite()], Some(a), "{a} -{d}-> {b}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn link_lengths_and_delays() {
        let p = reference();
        // Intra-plane chord at R+h = 6971 km, 15° arc: 2·6971·sin(7.5°).
        let v = p.isl_length_km(NodeId::new(3, 2), NodeId::new(3, 3)).unwrap();
        assert_relative_eq!(v, 1819.7962, epsilon = 1e-3);

        // Inter-plane at the equator: same half-angle for M = 2N, same length.
        let h0 = p.isl_length_km(NodeId::new(3, 0), NodeId::new(4, 0)).unwrap();
        assert_relative_eq!(h0, v, epsilon = 1e-9);

        // Inter-plane at 60° latitude: halved by cos(60°).
        let h60 = p.isl_length_km(NodeId::new(3, 4), NodeId::new(4, 4)).unwrap();
        assert_relative_eq!(h60, 909.8981, epsilon = 1e-3);
        assert_relative_eq!(h60, h0 / 2.0, epsilon = 1e-9);

        // Delays are lengths over c.
        let d = p.prop_delay_s(NodeId::new(3, 2), NodeId::new(3, 3)).unwrap();
        assert_relative_eq!(d, 6.0702e-3, epsilon = 1e-6);
        assert_eq!(d, v / LIGHT_SPEED_KM_S);
        let d60 = p.prop_delay_s(NodeId::new(3, 4), NodeId::new(4, 4)).unwrap();
        assert_relative_eq!(d60, 3.0351e-3, epsilon = 1e-6);
    }

    #[test]
    fn non_neighbors_are_rejected() {
        let p = reference();
        let e = p.isl_length_km(NodeId::new(3, 2), NodeId::new(3, 4)).unwrap_err();
        assert!(matches!(e, TopologyError::NotNeighbors(_, _)));
        let e = p.isl_length_km(NodeId::new(3, 2), NodeId::new(5, 2)).unwrap_err();
        assert!(matches!(e, TopologyError::NotNeighbors(_, _)));
        // Polar endpoints: the lateral link is switched off entirely.
        let e = p.isl_length_km(NodeId::new(3, 6), NodeId::new(4, 6)).unwrap_err();
        assert!(matches!(e, TopologyError::NotNeighbors(_, _)));
    }

    #[test]
    fn invalid_nodes_and_params_are_rejected() {
        let p = reference();
        assert!(matches!(
            p.node_position(NodeId::new(12, 0)),
            Err(TopologyError::InvalidNode(_))
        ));
        assert!(matches!(
            p.neighbors(NodeId::new(0, 24)),
            Err(TopologyError::InvalidNode(_))
        ));

        let mut bad = reference();
        bad.polar_threshold_deg = 90.0;
        assert!(bad.validate().is_err());
        let mut bad = reference();
        bad.n_planes = 1;
        assert!(bad.validate().is_err());
        let mut bad = reference();
        bad.inclination_deg = 53.0;
        assert!(bad.validate().is_err());
        assert!(reference().validate().is_ok());
    }
}
