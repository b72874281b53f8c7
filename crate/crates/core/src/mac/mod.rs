//! Per-hop and per-path delay reliability.
//!
//! Time is counted in slots throughout. Arrival and service rates are per
//! absolute slot of the superframe. Budgets `S` count slots of the class's
//! own period (CAP slots for NC, CFP slots for MC).

mod csma;
mod markov;
mod network;
mod poisson_binomial;
mod service;
mod tdma;

pub use csma::{
    channel_state, csma_fixed_point, csma_reliability, phi_table, success_profile, ChannelState,
    CsmaNode, CsmaSolution,
};
pub use markov::{csma_chain, stationary_distribution, MarkovChain};
pub use network::{
    evaluate, path_reliability, DiagnosticRow, EvalOptions, HopProfile, NetworkEvaluation,
    NodeMacContext, RouteTree, TreeNode, Uplink,
};
pub use poisson_binomial::{pb_cdf, pb_pmf, PoissonBinomial};
pub use service::{
    csma_mean_service, queue_wait, retransmission_factor, second_moment, tdma_mean_service,
};
pub use tdma::{tdma_profile, tdma_reliability};

use crate::math;
use crate::scenario::{MacParams, TrafficCategory};

/// Damping applied to the CSMA fixed point.
pub const FIXED_POINT_DAMPING: f64 = 0.5;
pub const FIXED_POINT_TOLERANCE: f64 = 1e-9;
pub const FIXED_POINT_MAX_ITER: usize = 10_000;

/// Latency budget split evenly over the hops of a route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotBudget {
    /// `N_s`: slots of the class's period that fit in the latency requirement.
    pub total: f64,
    /// `S = floor(N_s / H)`.
    pub per_hop: u32,
}

impl SlotBudget {
    pub fn is_feasible(&self) -> bool {
        self.per_hop >= 1
    }
}

/// `N_s = (L / T_F) * (N_T or N_C)` and `S = floor(N_s / H)`.
pub fn slot_budget(latency: f64, category: TrafficCategory, mac: &MacParams, hops: u32) -> SlotBudget {
    let total = latency / mac.frame_duration * mac.class_slots(category) as f64;
    let hops = hops.max(1) as f64;
    // Guard against 37.4999999 style round-off from the frame division.
    let per_hop = math::floor(total / hops + 1e-9).max(0.0);
    SlotBudget {
        total,
        per_hop: per_hop.min(u32::MAX as f64) as u32,
    }
}
