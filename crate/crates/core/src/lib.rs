//! Pedestrian and vehicle interaction simulator built on utility
//! maximization, ballistic motor primitives and evidence accumulation.

// Validation uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent_model;
pub mod config;
pub mod control;
pub mod engine;
pub mod error;
pub mod io;
pub mod kinematics;
pub mod metrics;
pub mod scenarios;
pub mod sweep;

pub use error::{Result, SimError};
