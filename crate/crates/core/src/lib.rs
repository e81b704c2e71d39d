//! Placement optimization for multi-UAV uplink networks over discrete
//! channel-gain maps.
//!
//! The crate provides:
//!
//! * [`ckm`]: grid-based channel-gain maps with CSV I/O, nearest-node and
//!   bilinear lookup, and a synthetic map generator for box-city scenes;
//! * [`net`]: the uplink scene with SINR, per-link rates, the weighted
//!   sum-rate objective, and its evaluation counter;
//! * [`surrogate`]: quadratic models fitted by interpolation on sampled
//!   placements;
//! * [`trs`]: an approximate maximizer of such models over a trust-region
//!   ball intersected with the area box;
//! * [`optimizer`]: the derivative-free trust-region search built from the
//!   two pieces above;
//! * [`baselines`]: exhaustive lattice search, hovering, and free-space
//!   design for comparison.
//!
//! Positions are metres in a fixed ground frame; gains are dB in storage and
//! linear power ratios in arithmetic; rates are bps/Hz.

pub mod baselines;
pub mod ckm;
pub mod error;
pub mod geom;
pub mod net;
pub mod optimizer;
pub mod surrogate;
pub mod trs;

pub use error::{Error, Result};
pub use geom::{Point2, Point3, Prism, Rect};
pub use net::{Objective, Placement};
