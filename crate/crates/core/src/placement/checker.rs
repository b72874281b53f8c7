//! Independent verifier for emitted solutions.

use alloc::vec;
use alloc::vec::Vec;

use super::{Parent, PlacementSolution, PlanContext};
use crate::error::Result;
use crate::mac::{evaluate, EvalOptions};
use crate::scenario::NodeId;

/// What the DAP capacity limit is summed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CapacityScope {
    /// Every meter routed to the DAP, each weighted by its own uplink.
    #[default]
    Cluster,
    /// Only meters attached directly, each carrying its aggregate
    /// (own plus forwarded) rate.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CheckOptions {
    pub capacity: CapacityScope,
    pub eval: EvalOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// A DAP that is not a pole, or a pole parent that is not a DAP.
    NotADap(NodeId),
    /// Parent is neither a neighbour over a usable link nor valid.
    MissingLink { node: NodeId, parent: NodeId },
    /// Parent chain does not end at a DAP.
    Cycle(NodeId),
    MutualParents(NodeId, NodeId),
    DepthMismatch { node: NodeId, stored: u32, actual: u32 },
    /// Recorded DAP differs from the root of the parent chain.
    WrongCluster(NodeId),
    /// Connected and listed as unconnected, or neither.
    Coverage(NodeId),
    Reliability { node: NodeId, mc: f64, nc: f64 },
    Capacity { dap: NodeId, load: f64, limit: f64 },
    /// Only meters may have routes.
    NotAMeter(NodeId),
}

/// Checks single parenthood, link feasibility, acyclicity and depth,
/// cluster consistency, coverage bookkeeping, reliability for both
/// categories on a fresh evaluation, DAP capacity and DAP selection.
/// Returns every violation found; an empty list means the solution holds.
pub fn check(ctx: &PlanContext<'_>, sol: &PlacementSolution, options: &CheckOptions) -> Result<Vec<Violation>> {
    let g = &ctx.graph;
    let s = ctx.scenario;
    let f = &sol.forest;
    let n = g.len();
    let mut out = Vec::new();

    let mut is_dap = vec![false; n];
    for &id in &sol.daps {
        match g.index_of(id) {
            Some(i) if !g.is_sm(i) => is_dap[i] = true,
            _ => out.push(Violation::NotADap(id)),
        }
    }
    let listed: Vec<bool> = (0..n).map(|i| sol.unconnected.binary_search(&g.id(i)).is_ok()).collect();

    let mut connected = vec![false; n];
    for i in 0..n {
        let Some(parent) = f.parent[i] else {
            if g.is_sm(i) && !listed[i] {
                out.push(Violation::Coverage(g.id(i)));
            }
            continue;
        };
        if !g.is_sm(i) {
            out.push(Violation::NotAMeter(g.id(i)));
            continue;
        }
        if listed[i] {
            out.push(Violation::Coverage(g.id(i)));
        }
        let p = parent.index();
        match parent {
            Parent::Dap(d) if g.is_sm(d) || !is_dap[d] => out.push(Violation::NotADap(g.id(d))),
            Parent::Meter(m) if !g.is_sm(m) => out.push(Violation::MissingLink { node: g.id(i), parent: g.id(m) }),
            _ => {}
        }
        if g.link(i, p).is_none_or(|l| !l.cost.is_finite()) {
            out.push(Violation::MissingLink { node: g.id(i), parent: g.id(p) });
        }
        if let Parent::Meter(m) = parent {
            if f.parent[m] == Some(Parent::Meter(i)) && g.id(i) < g.id(m) {
                out.push(Violation::MutualParents(g.id(i), g.id(m)));
            }
        }
        // Walk to the root; every ancestor appears once.
        let mut cur = i;
        let mut hops = 0u32;
        let root = loop {
            match f.parent[cur] {
                Some(Parent::Dap(d)) => break Some(d),
                Some(Parent::Meter(m)) => cur = m,
                None => break None,
            }
            hops += 1;
            if hops as usize > n {
                break None;
            }
        };
        match root {
            None => out.push(Violation::Cycle(g.id(i))),
            Some(d) => {
                connected[i] = true;
                if f.depth[i] != hops + 1 {
                    out.push(Violation::DepthMismatch { node: g.id(i), stored: f.depth[i], actual: hops + 1 });
                }
                if f.dap_of[i] != Some(d) {
                    out.push(Violation::WrongCluster(g.id(i)));
                }
            }
        }
    }
    if !out.is_empty() {
        // The delay model needs a well-formed forest.
        return Ok(out);
    }

    let tree = f.route_tree(ctx);
    let ev = evaluate(&tree, &s.mac, &s.traffic, &options.eval)?;
    for (slot, &i) in ctx.meters.iter().enumerate() {
        if let Some([mc, nc]) = ev.category_reliability(slot) {
            if mc < s.reliability || nc < s.reliability {
                out.push(Violation::Reliability { node: g.id(i), mc, nc });
            }
        }
    }

    let uplink_per = |i: usize| f.parent[i].and_then(|p| g.link(i, p.index())).map_or(1.0, |l| l.route_per);
    let feeders = f.feeders();
    let mut load = vec![0.0f64; n];
    for i in (0..n).filter(|&i| connected[i]) {
        let d = f.dap_of[i].expect("connected");
        match options.capacity {
            CapacityScope::Cluster => load[d] += ctx.load_weight(uplink_per(i)),
            CapacityScope::Direct => {
                if matches!(f.parent[i], Some(Parent::Dap(_))) {
                    load[d] += ctx.load_weight(uplink_per(i)) * (feeders[i] + 1) as f64;
                }
            }
        }
    }
    let limit = s.mac.dap_capacity;
    for d in (0..n).filter(|&d| is_dap[d]) {
        if load[d] > limit * (1.0 + 1e-9) {
            out.push(Violation::Capacity { dap: g.id(d), load: load[d], limit });
        }
    }
    Ok(out)
}
