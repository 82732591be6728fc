//! Simulation core for a UAV whose LED array serves ground users over
//! visible-light links.
//!
//! - [`channel`]: Lambertian line-of-sight gains and imperfect CSI.
//! - [`dimming`]: LED count, DC bias, and modulation headroom.
//! - [`flight`]: kinematics, flight constraints, propulsion power.
//! - [`metrics`]: NOMA rates, power, energy efficiency, feasibility.
//! - [`env`]: the slot-by-slot decision process built on the above.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod dimming;
pub mod env;
pub mod error;
pub mod flight;
pub mod geometry;
pub mod metrics;
pub mod trace;

pub use config::{load_config, SystemConfig};
pub use error::{Error, Result};
pub use geometry::{Matrix, Position, Vec3};
