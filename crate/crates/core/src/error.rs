use alloc::string::String;

use crate::scenario::NodeId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("radio budget infeasible: no distance beyond the reference meets PER ceiling {0}")]
    RadioBudgetInfeasible(f64),
    #[error("markov chain has no unique stationary distribution")]
    ChainNotErgodic,
    #[error("queue unstable: arrival rate {lambda} >= service rate {mu}")]
    UnstableQueue { lambda: f64, mu: f64 },
    #[error("degenerate retransmission factor (zero success probability)")]
    UnreliableNode,
    #[error("CSMA fixed point did not converge, last residual {residual:e}")]
    NoConvergence { residual: f64 },
    #[error("instance exceeds exact search limits: {0}")]
    OversizeInstance(String),
}
