//! Planning core for data acquisition point (DAP) placement in smart-metering
//! mesh networks.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every model the planner
//! depends on:
//!
//! - [`scenario`]: nodes, radio/MAC/traffic parameter bundles, synthetic
//!   layouts, and the 2-d k-d tree used for range searches.
//! - [`link`]: path loss, SINR, packet error rate and additive link cost.
//! - [`mac`]: slot budgets, Poisson-binomial TDMA grant delay, the slotted
//!   CSMA/CA Markov chain, M/G/1 queueing and per-path reliability.
//! - [`placement`]: greedy pole selection, capacity-aware shortest-path trees,
//!   centroid relocation, the reliability repair loop and a constraint checker.
//! - [`oracle`]: exact small-instance search, Poisson-binomial reference
//!   distributions and a slot-level MAC simulator.
//!
//! IO, configuration files and the command line live in the `dap-planner`
//! crate.
#![no_std]
#![warn(missing_debug_implementations, rust_2018_idioms)]

extern crate alloc;

pub mod error;
pub mod link;
pub mod mac;
mod math;
mod par;
pub mod oracle;
pub mod placement;
pub mod scenario;

pub use error::{Error, Result};
pub use scenario::{NodeId, NodeKind, Point, Scenario};
