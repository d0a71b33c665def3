//! Energy-aware resource allocation for energy-harvesting wireless sensor
//! networks.
//!
//! A power beacon charges the sensors over the downlink; each sensor then
//! spends its stored energy to upload data to a multi-antenna access point.
//! Every frame the controller picks the beacon power split, the sensors'
//! transmit powers and the harvest/transmit time split by maximizing a
//! drift-plus-penalty objective. The non-convex per-frame problem is handled
//! by successive convex approximation ([`sca`]) on top of a small
//! interior-point solver ([`solver`]).

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod harness;
pub mod model;
pub mod phy;
pub mod queues;
pub mod sca;
pub mod solver;
pub mod stochastic;

pub use error::{Error, Result};
pub use model::{Allocation, FrameState, SlackState, SystemConfig, UnitScales};
