//! Hybrid continuous-discrete simulator for the TCP/RED fluid model.
//!
//! The crate is layered bottom-up:
//!
//! - [`solver`]: Dormand-Prince 5(4) stepping with dense output and exact
//!   landing on mandatory stop times.
//! - [`history`]: past-state storage answering delayed lookups.
//! - [`dde`]: method-of-steps driver for constant-lag delay equations.
//! - [`events`]: post-step state clamps and the sampled controller.
//! - [`red_model`]: the window / queue / averaged-queue equations, the RED
//!   drop law and the ready-made [`red_model::simulate`] entry point.
//! - [`analysis`]: peak detection and sustained-oscillation metrics.
//! - [`cli`]: configuration parsing, CSV output, sweeps and self-tests used
//!   by the `redsim` binary.
//!
//! Runnable walkthroughs of each layer live in `examples/`.

// `!(x > 0.0)` style checks are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod dde;
pub mod error;
pub mod events;
pub mod history;
pub mod red_model;
pub mod solver;

pub use error::{Error, Result};
