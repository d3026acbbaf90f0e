//! Simulation and sizing of motion-powered, batteryless sensing nodes.
//!
//! A hinge actuation spins a geared generator, the rectified output charges a
//! buffer capacitor, and a close-triggered gate spends the stored burst on one
//! wake, sense and transmit transaction.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod drivetrain;
pub mod error;
pub mod motion;
pub mod powerpath;
pub mod rng;
pub mod sim;
pub mod sizing;
pub mod transaction;

pub use error::{Error, Result};
