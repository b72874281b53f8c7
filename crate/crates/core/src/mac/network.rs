//! Whole-network evaluation: aggregate arrival rates, CSMA fixed point,
//! service moments, queueing and per-class path reliability.

use alloc::vec;
use alloc::vec::Vec;

use super::csma::{self, profile_at, success_profile, ChannelState, CsmaNode};
use super::service::{csma_mean_service, queue_wait, retransmission_factor, second_moment, tdma_mean_service};
use super::slot_budget;
use super::tdma::tdma_profile;
use crate::error::{Error, Result};
use crate::math;
use crate::par;
use crate::scenario::{MacParams, NodeId, TrafficCategory, TrafficClass};

/// Where a meter sends its traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Uplink {
    /// Index of the parent meter in the same [`RouteTree`].
    Meter(usize),
    /// Direct link to the DAP on this pole.
    Dap(NodeId),
    /// Not connected; generates no traffic.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: NodeId,
    pub uplink: Uplink,
    /// Uplink PER per category (MC first).
    pub per: [f64; 2],
    /// Indices of meters within radio range, tree edges or not.
    pub neighbors: Vec<usize>,
}

/// Meters with their uplinks and contention neighbourhoods; the only view of
/// the topology the delay model needs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RouteTree {
    pub nodes: Vec<TreeNode>,
}

impl RouteTree {
    /// Hop count to the DAP per meter, `None` when unconnected. Fails on a
    /// cycle or a dangling parent.
    pub fn depths(&self) -> Result<Vec<Option<u32>>> {
        let n = self.nodes.len();
        let mut depth: Vec<Option<u32>> = vec![None; n];
        let mut state = vec![0u8; n]; // 0 new, 1 on stack, 2 done
        for start in 0..n {
            let mut path = Vec::new();
            let mut cur = start;
            let base = loop {
                if state[cur] == 2 {
                    break depth[cur];
                }
                if state[cur] == 1 {
                    return Err(Error::InvalidScenario("routing cycle".into()));
                }
                state[cur] = 1;
                path.push(cur);
                match self.nodes[cur].uplink {
                    Uplink::Meter(p) if p < n => cur = p,
                    Uplink::Meter(_) => return Err(Error::InvalidScenario("dangling parent".into())),
                    Uplink::Dap(_) => break Some(0),
                    Uplink::None => {
                        // The last pushed node is itself unconnected.
                        path.pop();
                        state[cur] = 2;
                        depth[cur] = None;
                        break None;
                    }
                }
            };
            let mut d = base;
            for &v in path.iter().rev() {
                d = d.map(|x| x + 1);
                depth[v] = d;
                state[v] = 2;
            }
        }
        Ok(depth)
    }

    /// Number of connected meters routing through each meter (excluding itself).
    pub fn feeder_counts(&self, depth: &[Option<u32>]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.nodes.len()).filter(|&i| depth[i].is_some()).collect();
        order.sort_by_key(|&i| core::cmp::Reverse(depth[i]));
        let mut subtree = vec![0usize; self.nodes.len()];
        for &i in &order {
            subtree[i] += 1;
            if let Uplink::Meter(p) = self.nodes[i].uplink {
                subtree[p] += subtree[i];
            }
        }
        subtree.iter().map(|&s| s.saturating_sub(1)).collect()
    }

    /// Meters on the route from `i` to its DAP, starting with `i`.
    pub fn route(&self, i: usize) -> Vec<usize> {
        let mut out = vec![i];
        let mut cur = i;
        while let Uplink::Meter(p) = self.nodes[cur].uplink {
            out.push(p);
            cur = p;
            if out.len() > self.nodes.len() {
                break;
            }
        }
        out
    }
}

/// Cumulative success curve of one hop with the queueing delay folded in.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HopProfile {
    cumulative: Vec<f64>,
    /// Slots of the budget consumed before the curve starts.
    offset: u32,
    unstable: bool,
}

impl HopProfile {
    /// Reliability of this hop under a per-hop budget of `s` slots.
    pub fn reliability(&self, s: u32) -> f64 {
        if self.unstable {
            return 0.0;
        }
        profile_at(&self.cumulative, s as i64 - self.offset as i64)
    }
}

/// Delay-model state of one meter for one traffic category.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMacContext {
    pub depth: u32,
    pub feeders: usize,
    /// Aggregate arrivals per slot, `sigma * lambda0 * (N_f + 1)`.
    pub lambda: f64,
    pub sigma: f64,
    /// E[Y] in slots.
    pub mean_service: f64,
    pub second_moment: f64,
    pub mu: f64,
    /// Probability of a queued packet, `lambda / mu` capped at 1.
    pub p: f64,
    pub channel: ChannelState,
    pub xi: f64,
    /// Uplink PER.
    pub eps: f64,
    /// Rounded-up mean queueing delay; `None` for an unstable queue.
    pub t_q: Option<u32>,
    /// Own per-hop budget at the category's tightest latency.
    pub budget: u32,
    pub profile: HopProfile,
}

impl NodeMacContext {
    pub fn is_stable(&self) -> bool {
        self.t_q.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Extra passes that refresh sigma, lambda, mu and p after the first
    /// fixed point.
    pub refresh_rounds: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { refresh_rounds: 1 }
    }
}

/// One row of the per-node diagnostic dump.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub node: NodeId,
    pub category: TrafficCategory,
    pub lambda: f64,
    pub mu: f64,
    pub p: f64,
    pub alpha: f64,
    pub xi: f64,
    pub chi: f64,
    pub t_q: Option<u32>,
    pub budget: u32,
    pub reliability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkEvaluation {
    /// `[MC, NC]` context per meter; `None` for unconnected meters.
    pub contexts: Vec<Option<[NodeMacContext; 2]>>,
    /// Path reliability per meter per traffic class (scenario class order);
    /// empty for unconnected meters.
    pub class_reliability: Vec<Vec<f64>>,
    pub classes: Vec<(TrafficCategory, f64)>,
    pub fixed_point_residual: f64,
    pub fixed_point_iterations: usize,
}

impl NetworkEvaluation {
    /// `[R_MC, R_NC]`: the weakest class of each category, 1 when a category
    /// has no classes. `None` for unconnected meters.
    pub fn category_reliability(&self, i: usize) -> Option<[f64; 2]> {
        self.contexts[i].as_ref()?;
        let mut out = [1.0f64; 2];
        for (r, (cat, _)) in self.class_reliability[i].iter().zip(&self.classes) {
            let slot = &mut out[cat.index()];
            *slot = slot.min(*r);
        }
        Some(out)
    }

    /// Lowest class reliability of a connected meter.
    pub fn min_reliability(&self, i: usize) -> Option<f64> {
        self.category_reliability(i).map(|r| r[0].min(r[1]))
    }

    pub fn diagnostics(&self, tree: &RouteTree) -> Vec<DiagnosticRow> {
        let mut rows = Vec::new();
        for (i, ctx) in self.contexts.iter().enumerate() {
            let Some(ctx) = ctx else { continue };
            for cat in TrafficCategory::ALL {
                let c = &ctx[cat.index()];
                rows.push(DiagnosticRow {
                    node: tree.nodes[i].id,
                    category: cat,
                    lambda: c.lambda,
                    mu: c.mu,
                    p: c.p,
                    alpha: c.channel.alpha,
                    xi: c.xi,
                    chi: c.channel.chi,
                    t_q: c.t_q,
                    budget: c.budget,
                    reliability: c.profile.reliability(c.budget),
                });
            }
        }
        rows
    }

    /// Arrivals per slot entering a DAP, per category: the aggregate rate of
    /// every meter attached to it directly.
    pub fn dap_inflow(&self, tree: &RouteTree, dap: NodeId) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (i, n) in tree.nodes.iter().enumerate() {
            if n.uplink == Uplink::Dap(dap) {
                if let Some(ctx) = &self.contexts[i] {
                    out[0] += ctx[0].lambda;
                    out[1] += ctx[1].lambda;
                }
            }
        }
        out
    }
}

/// `R_n = prod_h R_h`; zero if any hop is infeasible.
pub fn path_reliability(hops: &[f64]) -> f64 {
    hops.iter().product::<f64>().clamp(0.0, 1.0)
}

fn category_latency(traffic: &[TrafficClass], cat: TrafficCategory, pick: fn(f64, f64) -> f64) -> Option<f64> {
    traffic.iter().filter(|t| t.category == cat).map(|t| t.latency).reduce(pick)
}

/// Evaluates every connected meter of `tree` under `mac` and `traffic`.
///
/// Order: MC rates and TDMA service; NC with an idle-channel guess for
/// sigma and alpha, then the CSMA fixed point; `refresh_rounds` passes that
/// refresh sigma, lambda, mu and p and re-solve from the previous iterate;
/// then second moments, queueing delay and hop profiles; finally per-class
/// path products.
pub fn evaluate(
    tree: &RouteTree,
    mac: &MacParams,
    traffic: &[TrafficClass],
    options: &EvalOptions,
) -> Result<NetworkEvaluation> {
    mac.validate()?;
    let n = tree.nodes.len();
    let depth = tree.depths()?;
    let feeders = tree.feeder_counts(&depth);
    let slot = mac.slot_duration();
    let mut lambda0 = [0.0; 2];
    for t in traffic {
        lambda0[t.category.index()] += t.rate() * slot;
    }
    let connected = |i: usize| depth[i].is_some();
    let mc = TrafficCategory::Mc.index();
    let nc = TrafficCategory::Nc.index();

    // Mission-critical: sigma is fixed by the link.
    let mut lambda = vec![[0.0f64; 2]; n];
    let mut sigma = vec![[1.0f64; 2]; n];
    for i in 0..n {
        if connected(i) {
            sigma[i][mc] = retransmission_factor(TrafficCategory::Mc, tree.nodes[i].per[mc], 0.0, 1.0, 0)
                .unwrap_or(f64::INFINITY);
            lambda[i][mc] = sigma[i][mc] * lambda0[mc] * (feeders[i] + 1) as f64;
        }
    }
    let mc_latency_slots = category_latency(traffic, TrafficCategory::Mc, f64::min).unwrap_or(0.0) / slot;
    let mut ey = vec![[0.0f64; 2]; n];
    for i in 0..n {
        if !connected(i) {
            continue;
        }
        let h = depth[i].unwrap_or(1).max(1) as f64;
        let sum_lambda: f64 = lambda[i][mc] + tree.nodes[i].neighbors.iter().map(|&j| lambda[j][mc]).sum::<f64>();
        ey[i][mc] = tdma_mean_service(mac, 0.5 * sum_lambda * mc_latency_slots / h);
    }

    // Non-critical: start from an idle channel.
    let mut channel = vec![ChannelState::IDLE; n];
    for i in 0..n {
        channel[i].chi = tree.nodes[i].per[nc];
    }
    let max_stage = mac.max_backoff_stage;
    let mut xi: Option<Vec<f64>> = None;
    let mut solution = None;
    let mut unreliable = vec![false; n];
    for _round in 0..=options.refresh_rounds {
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            let node = &tree.nodes[i];
            let p = if connected(i) {
                sigma[i][nc] = retransmission_factor(TrafficCategory::Nc, node.per[nc], channel[i].chi, channel[i].alpha, max_stage)
                    .unwrap_or(f64::INFINITY);
                lambda[i][nc] = sigma[i][nc] * lambda0[nc] * (feeders[i] + 1) as f64;
                ey[i][nc] = csma_mean_service(mac, channel[i].alpha);
                (lambda[i][nc] * ey[i][nc]).min(1.0)
            } else {
                0.0
            };
            nodes.push(CsmaNode {
                p: if p.is_finite() { p } else { 1.0 },
                eps: node.per[nc],
                neighbors: node.neighbors.clone(),
            });
        }
        let sol = csma::solve(&nodes, mac, xi.as_deref())?;
        for i in 0..n {
            channel[i] = sol.state[i];
            unreliable[i] = sol.node_residual[i] >= super::FIXED_POINT_TOLERANCE;
        }
        xi = Some(sol.xi.clone());
        solution = Some(sol);
    }
    let solution = solution.expect("at least one round");

    let max_budget = |cat: TrafficCategory| {
        category_latency(traffic, cat, f64::max).map_or(0, |l| slot_budget(l, cat, mac, 1).per_hop) as usize
    };
    let caps = [max_budget(TrafficCategory::Mc), max_budget(TrafficCategory::Nc)];
    let mc_p: Vec<f64> = (0..n)
        .map(|i| if connected(i) { (lambda[i][mc] * ey[i][mc]).min(1.0) } else { 0.0 })
        .collect();

    let contexts: Vec<Option<[NodeMacContext; 2]>> = par::map_indexed(n, |i| {
        let d = depth[i]?;
        let node = &tree.nodes[i];
        let build = |cat: TrafficCategory| -> NodeMacContext {
            let c = cat.index();
            let (cum, state, xi_i) = match cat {
                TrafficCategory::Mc => {
                    let p: Vec<f64> = node.neighbors.iter().map(|&j| mc_p[j]).filter(|&p| p > 0.0).collect();
                    (tdma_profile(&p, node.per[c], mac.max_retries, caps[c]), ChannelState::IDLE, 0.0)
                }
                TrafficCategory::Nc => (success_profile(&solution.state[i], mac, caps[c]), solution.state[i], solution.xi[i]),
            };
            let shift: i64 = if cat == TrafficCategory::Nc { 1 } else { 0 };
            let budget = category_latency(traffic, cat, f64::min)
                .map_or(0, |l| slot_budget(l, cat, mac, d).per_hop);
            let own = category_latency(traffic, cat, f64::max)
                .map_or(0, |l| slot_budget(l, cat, mac, d).per_hop);
            let r: Vec<f64> = (0..=own as i64).map(|k| profile_at(&cum, k - shift)).collect();
            let ey2 = second_moment(mac, cat, &r);
            let mu = 1.0 / ey[i][c];
            let lam = lambda[i][c];
            let bad = cat == TrafficCategory::Nc && unreliable[i];
            let t_q = if bad || !lam.is_finite() {
                None
            } else {
                queue_wait(lam, ey2, mu).ok().map(|w| math::ceil(w - 1e-12).max(0.0) as u32)
            };
            NodeMacContext {
                depth: d,
                feeders: feeders[i],
                lambda: lam,
                sigma: sigma[i][c],
                mean_service: ey[i][c],
                second_moment: ey2,
                mu,
                p: (lam / mu).min(1.0),
                channel: state,
                xi: xi_i,
                eps: node.per[c],
                t_q,
                budget,
                profile: HopProfile {
                    offset: t_q.unwrap_or(0) + shift as u32,
                    unstable: t_q.is_none(),
                    cumulative: cum,
                },
            }
        };
        Some([build(TrafficCategory::Mc), build(TrafficCategory::Nc)])
    });

    let classes: Vec<(TrafficCategory, f64)> = traffic.iter().map(|t| (t.category, t.latency)).collect();
    let class_reliability: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let Some(d) = depth[i] else { return Vec::new() };
            let route = tree.route(i);
            classes
                .iter()
                .map(|&(cat, latency)| {
                    let s = slot_budget(latency, cat, mac, d).per_hop;
                    if s == 0 {
                        return 0.0;
                    }
                    let hops: Vec<f64> = route
                        .iter()
                        .map(|&r| contexts[r].as_ref().map_or(0.0, |c| c[cat.index()].profile.reliability(s)))
                        .collect();
                    path_reliability(&hops)
                })
                .collect()
        })
        .collect();

    Ok(NetworkEvaluation {
        contexts,
        class_reliability,
        classes,
        fixed_point_residual: solution.residual,
        fixed_point_iterations: solution.iterations,
    })
}
