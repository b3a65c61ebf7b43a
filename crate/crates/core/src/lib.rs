//! Simulation workbench for secure cooperative localization in UAV swarms.
//!
//! The crate is organised bottom-up:
//!
//! - [`errormodel`]: RSSI ranging noise, self-positioning noise and the fused
//!   modeled error scale `sigma_M`.
//! - [`crlb`]: Fisher information and Cramér–Rao bounds for 3D anchor
//!   geometries, including the Cayley–Menger style oracle and bounds under
//!   attack.
//! - [`estimators`]: LS, WLS, LN-1, fixed-step GD and the mobility-adaptive
//!   MAGD tracker.
//! - [`threat`]: falsified-beacon injection, attack orchestration and
//!   effectiveness metrics.
//! - [`defense`]: trust-aware anomaly detection and reputation propagation.
//! - [`scenario`]: worlds, mobility and the seeded Monte Carlo engine.
//! - [`experiments`]: the experiment drivers behind the command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crlb;
pub mod defense;
pub mod error;
pub mod errormodel;
pub mod estimators;
pub mod experiments;
pub mod rng;
pub mod scenario;
pub mod threat;

use std::fmt;

pub use error::{Error, Result};

/// Cartesian position or offset in meters.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Identifier of a UAV inside one simulated world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UavId(pub u32);

impl fmt::Display for UavId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
