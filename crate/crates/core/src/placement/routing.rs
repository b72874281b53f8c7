//! Capacity-aware multi-source shortest-path trees rooted at the DAPs.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::PlanContext;
use crate::mac::{RouteTree, TreeNode, Uplink};
use crate::scenario::NodeId;

/// Next hop of a meter; indices are positions in `Scenario::nodes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parent {
    Meter(usize),
    Dap(usize),
}

impl Parent {
    pub fn index(self) -> usize {
        match self {
            Parent::Meter(i) | Parent::Dap(i) => i,
        }
    }
}

/// Per-meter routes to the selected DAPs.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingForest {
    /// Selected DAP poles (node indices), ascending by id.
    pub daps: Vec<usize>,
    /// Indexed by node; `None` for poles and unconnected meters.
    pub parent: Vec<Option<Parent>>,
    /// Hops to the DAP (0 when unconnected).
    pub depth: Vec<u32>,
    /// Summed link cost to the DAP.
    pub cost: Vec<f64>,
    /// Serving DAP per node.
    pub dap_of: Vec<Option<usize>>,
    /// Weighted arrival rate (packets/s) per DAP, aligned with `daps`.
    pub load: Vec<f64>,
}

impl RoutingForest {
    pub fn is_connected(&self, i: usize) -> bool {
        self.parent[i].is_some()
    }

    /// Members of the cluster served by DAP `d` (node index), in node order.
    pub fn cluster(&self, d: usize) -> Vec<usize> {
        (0..self.parent.len()).filter(|&i| self.dap_of[i] == Some(d)).collect()
    }

    /// Number of meters routing through each node, not counting itself.
    pub fn feeders(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.parent.len()).filter(|&i| self.is_connected(i)).collect();
        order.sort_by_key(|&i| core::cmp::Reverse(self.depth[i]));
        let mut sub = vec![0usize; self.parent.len()];
        for &i in &order {
            sub[i] += 1;
            if let Some(Parent::Meter(p)) = self.parent[i] {
                sub[p] += sub[i];
            }
        }
        sub.iter().map(|&s| s.saturating_sub(1)).collect()
    }

    /// Same assignment: identical parent for every node.
    pub fn same_assignment(&self, other: &RoutingForest) -> bool {
        self.daps == other.daps && self.parent == other.parent
    }

    /// Meter-only view for the delay model, in scenario meter order.
    pub fn route_tree(&self, ctx: &PlanContext<'_>) -> RouteTree {
        let g = &ctx.graph;
        let nodes = ctx
            .meters
            .iter()
            .map(|&i| {
                let uplink = match self.parent[i] {
                    Some(Parent::Meter(p)) => Uplink::Meter(ctx.meter_slot[p].expect("meter parent")),
                    Some(Parent::Dap(d)) => Uplink::Dap(g.id(d)),
                    None => Uplink::None,
                };
                let per = match self.parent[i] {
                    Some(p) => g.link(i, p.index()).map_or([1.0, 1.0], |l| l.per),
                    None => [0.0, 0.0],
                };
                let neighbors = g.sm_links(i).filter_map(|l| ctx.meter_slot[l.to]).collect();
                TreeNode { id: g.id(i), uplink, per, neighbors }
            })
            .collect();
        RouteTree { nodes }
    }
}

#[derive(Debug, Clone, Copy)]
struct Label {
    cost: f64,
    dap_id: NodeId,
    node_id: NodeId,
    parent_id: NodeId,
    node: usize,
    dap: usize,
    parent: Parent,
    /// Weighted load the node adds to its cluster over this uplink.
    weight: f64,
}

impl Label {
    fn key(&self) -> (f64, NodeId, NodeId, NodeId) {
        (self.cost, self.dap_id, self.node_id, self.parent_id)
    }
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Label {}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Label {
    /// Reversed so the max-heap pops the smallest `(cost, dap, node, parent)`.
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        b.0.total_cmp(&a.0)
            .then(b.1.cmp(&a.1))
            .then(b.2.cmp(&a.2))
            .then(b.3.cmp(&a.3))
    }
}

/// Multi-source Dijkstra over meter links with additive costs
/// `log(1/(1-eps))`. A meter is attached when its cheapest pending label
/// comes from a DAP whose weighted cluster load still has room for it;
/// otherwise that label is dropped and the meter waits for another DAP.
/// Only meters with `active[i]` take part.
pub fn phase2_routes(ctx: &PlanContext<'_>, daps: &[usize], active: &[bool]) -> RoutingForest {
    let g = &ctx.graph;
    let n = g.len();
    let mut daps: Vec<usize> = daps.to_vec();
    daps.sort_by_key(|&d| g.id(d));
    daps.dedup();
    let slot_of = |d: usize| daps.binary_search_by_key(&g.id(d), |&x| g.id(x)).expect("dap");

    let mut parent: Vec<Option<Parent>> = vec![None; n];
    let mut depth = vec![0u32; n];
    let mut cost = vec![0.0f64; n];
    let mut dap_of: Vec<Option<usize>> = vec![None; n];
    let mut load = vec![0.0f64; daps.len()];
    let mut settled = vec![false; n];
    let capacity = ctx.scenario.mac.dap_capacity;

    let mut heap = BinaryHeap::new();
    for &d in &daps {
        for l in g.sm_links(d) {
            if active[l.to] {
                heap.push(Label {
                    cost: l.cost,
                    dap_id: g.id(d),
                    node_id: g.id(l.to),
                    parent_id: g.id(d),
                    node: l.to,
                    dap: d,
                    parent: Parent::Dap(d),
                    weight: ctx.load_weight(l.route_per),
                });
            }
        }
    }
    while let Some(lab) = heap.pop() {
        let v = lab.node;
        if settled[v] {
            continue;
        }
        let s = slot_of(lab.dap);
        let w = lab.weight;
        if load[s] + w > capacity * (1.0 + 1e-12) {
            continue;
        }
        settled[v] = true;
        load[s] += w;
        parent[v] = Some(lab.parent);
        dap_of[v] = Some(lab.dap);
        cost[v] = lab.cost;
        depth[v] = match lab.parent {
            Parent::Dap(_) => 1,
            Parent::Meter(p) => depth[p] + 1,
        };
        for l in g.sm_links(v) {
            let u = l.to;
            if active[u] && !settled[u] {
                heap.push(Label {
                    cost: lab.cost + l.cost,
                    dap_id: lab.dap_id,
                    node_id: g.id(u),
                    parent_id: g.id(v),
                    node: u,
                    dap: lab.dap,
                    parent: Parent::Meter(v),
                    weight: ctx.load_weight(l.route_per),
                });
            }
        }
    }
    RoutingForest { daps, parent, depth, cost, dap_of, load }
}
