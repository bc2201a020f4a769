//! Routing and congestion-control experiments for polar LEO constellations.
//!
//! The crate is organized bottom-up:
//!
//! * [`constellation`] — Walker-star grid geometry, inter-satellite link
//!   topology, link lengths and propagation delays.
//! * [`routing`] — hop-minimal direction estimation over the grid and the
//!   primary/secondary enhancement used by congestion-aware forwarding.
//! * [`congestion`] — per-hop forwarding policies: plain threshold spillover
//!   and the probabilistic rule driven by piggybacked traffic metrics.
//! * [`mesh`] — infinite-mesh queueing analysis of the probabilistic policy
//!   (fixed-point solver) plus a small torus micro-simulator used as its
//!   empirical oracle.
//! * [`sim`] — event-driven simulator of a constellation region with
//!   per-direction output buffers and windowed traffic generation.
//! * [`exp`] — experiment drivers: config files, replication sweeps, CSV
//!   emission. The `leosim` binary is a thin CLI over this module.

pub mod congestion;
pub mod constellation;
pub mod exp;
pub mod mesh;
pub mod routing;
pub mod sim;

mod des;
