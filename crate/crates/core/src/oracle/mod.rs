//! Reference computations the planner is checked against: exhaustive
//! minimum-DAP search, Poisson-binomial distributions by enumeration and
//! dynamic programming, and a slot-level MAC simulator.

mod des;
mod exact;
mod pb;
mod validate;

pub use des::{simulate_des, simulate_trace, Arrival, ClassTally, DelaySample, HopTally, SimConfig, SimSummary};
pub use exact::{exact_min_daps, ExactLimits, ExactResult, ExactStatus};
pub use pb::{pb_dp, pb_enumerate, ENUMERATION_LIMIT};
pub use validate::{validate, PooledRow, ValidationOptions, ValidationReport, ValidationRow};
