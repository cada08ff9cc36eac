//! Sampling-based MPPI control for a quadrotor, an analytical
//! timing/resource model of a pipelined rollout accelerator, and a
//! closed-loop simulation harness comparing a batch (GPU-style) backend
//! against the pipelined one.

pub mod accel;
pub mod cost;
pub mod dynamics;
mod error;
pub mod mppi;
pub mod plot;
pub mod sim;

pub use error::{Error, Result};
