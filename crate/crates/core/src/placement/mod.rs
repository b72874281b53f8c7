//! DAP placement: greedy pole selection, capacity-aware shortest-path
//! routing, centroid relocation and reliability-driven DAP addition.

mod checker;
mod greedy;
mod relocate;
mod routing;

pub use checker::{check, CapacityScope, CheckOptions, Violation};
pub use greedy::{coverable_meters, phase1_greedy};
pub use relocate::relocate_centroids;
pub use routing::{phase2_routes, Parent, RoutingForest};

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::link::LinkGraph;
use crate::mac::{evaluate, EvalOptions, NetworkEvaluation};
use crate::scenario::{NodeId, NodeKind, Point, Scenario, SpatialIndex};

/// Scenario plus the derived structures every placement step reads.
#[derive(Debug, Clone)]
pub struct PlanContext<'a> {
    pub scenario: &'a Scenario,
    pub graph: LinkGraph,
    /// Node indices of the smart meters, in scenario order.
    pub meters: Vec<usize>,
    /// Node indices of the poles, in scenario order.
    pub poles: Vec<usize>,
    /// Position of a node in `meters`, `None` for poles.
    pub meter_slot: Vec<Option<usize>>,
    pole_index: SpatialIndex,
    rate: f64,
}

impl<'a> PlanContext<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self> {
        scenario.validate()?;
        let graph = LinkGraph::build(scenario)?;
        Ok(Self::with_graph(scenario, graph))
    }

    pub fn with_graph(scenario: &'a Scenario, graph: LinkGraph) -> Self {
        let mut meters = Vec::new();
        let mut poles = Vec::new();
        let mut meter_slot = vec![None; scenario.nodes.len()];
        for (i, n) in scenario.nodes.iter().enumerate() {
            match n.kind {
                NodeKind::SmartMeter => {
                    meter_slot[i] = Some(meters.len());
                    meters.push(i);
                }
                NodeKind::Pole => poles.push(i),
            }
        }
        let pole_index = SpatialIndex::build(poles.iter().map(|&i| (scenario.nodes[i].id, scenario.nodes[i].position, i)));
        PlanContext { scenario, graph, meters, poles, meter_slot, pole_index, rate: scenario.total_rate() }
    }

    pub fn position(&self, i: usize) -> Point {
        self.scenario.nodes[i].position
    }

    /// Load a meter adds to its DAP: all-class packet rate inflated by the
    /// expected number of transmissions on its uplink.
    pub fn load_weight(&self, uplink_per: f64) -> f64 {
        if uplink_per >= 1.0 {
            f64::INFINITY
        } else {
            self.rate / (1.0 - uplink_per)
        }
    }

    /// Nearest pole to `target` accepted by `keep` (node index), lowest id on ties.
    pub fn nearest_pole(&self, target: Point, keep: impl Fn(usize) -> bool) -> Option<usize> {
        self.pole_index.nearest(target, keep).map(|(_, i)| i)
    }
}

/// A routing forest with its delay-model evaluation.
#[derive(Debug, Clone)]
pub struct Audit {
    pub forest: RoutingForest,
    /// Indexed by meter position (see [`PlanContext::meters`]).
    pub evaluation: NetworkEvaluation,
    /// Connected meters with `min(R_MC, R_NC) >= rho`.
    pub satisfied: usize,
    pub connected: usize,
    /// Connected meters (node indices) failing the target.
    pub low: Vec<usize>,
}

impl Audit {
    /// `[R_MC, R_NC]` of node `i`, `None` for poles and unconnected meters.
    pub fn reliability(&self, ctx: &PlanContext<'_>, i: usize) -> Option<[f64; 2]> {
        self.evaluation.category_reliability(ctx.meter_slot[i]?)
    }
}

/// Evaluates `forest` and classifies every connected meter against `rho`.
pub fn audit(ctx: &PlanContext<'_>, forest: RoutingForest, options: &EvalOptions) -> Result<Audit> {
    let s = ctx.scenario;
    let tree = forest.route_tree(ctx);
    let evaluation = evaluate(&tree, &s.mac, &s.traffic, options)?;
    let mut satisfied = 0;
    let mut connected = 0;
    let mut low = Vec::new();
    for (slot, &i) in ctx.meters.iter().enumerate() {
        if let Some(r) = evaluation.min_reliability(slot) {
            connected += 1;
            if r >= s.reliability {
                satisfied += 1;
            } else {
                low.push(i);
            }
        }
    }
    Ok(Audit { forest, evaluation, satisfied, connected, low })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanOptions {
    /// Run the centroid relocation step.
    pub relocate: bool,
    pub eval: EvalOptions,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions { relocate: true, eval: EvalOptions::default() }
    }
}

/// State after one routing/relocation/audit round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterationRecord {
    pub daps: usize,
    /// DAPs added by the greedy step that led to this round.
    pub added: usize,
    pub relocated: usize,
    pub connected: usize,
    pub satisfied: usize,
    pub low_reliability: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementSolution {
    /// Selected poles, ascending id.
    pub daps: Vec<NodeId>,
    pub forest: RoutingForest,
    /// Evaluation of `forest`, indexed by meter position.
    pub evaluation: NetworkEvaluation,
    /// Meters without a route, ascending id. Includes `pruned`.
    pub unconnected: Vec<NodeId>,
    /// Meters that had a route but could not reach the target and were
    /// detached at the end.
    pub pruned: Vec<NodeId>,
    pub iterations: Vec<IterationRecord>,
    pub phase1_daps: usize,
    /// The loop ended because another round would have lowered the number
    /// of satisfied meters.
    pub stopped_by_guard: bool,
}

impl PlacementSolution {
    pub fn dap_count(&self) -> usize {
        self.daps.len()
    }

    pub fn reliability(&self, ctx: &PlanContext<'_>, i: usize) -> Option<[f64; 2]> {
        self.evaluation.category_reliability(ctx.meter_slot[i]?)
    }

    pub fn max_hops(&self) -> u32 {
        self.forest.depth.iter().copied().max().unwrap_or(0)
    }

    /// Mean of `e_{k+1} / e_k` over the logged rounds, where `e_k` is the
    /// distance of round `k`'s DAP count from the final one.
    pub fn convergence_ratio(&self) -> Option<f64> {
        let last = self.iterations.last()?.daps as f64;
        let err: Vec<f64> = self.iterations.iter().map(|r| (last - r.daps as f64).abs()).collect();
        let ratios: Vec<f64> = err.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).collect();
        (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64)
    }
}

fn sorted_daps(ctx: &PlanContext<'_>, is_dap: &[bool]) -> Vec<usize> {
    let mut d: Vec<usize> = ctx.poles.iter().copied().filter(|&p| is_dap[p]).collect();
    d.sort_by_key(|&p| ctx.graph.id(p));
    d
}

/// Routes `active` meters to a fixed DAP set and packages the result
/// without any placement search.
pub fn fixed_solution(
    ctx: &PlanContext<'_>,
    daps: &[usize],
    active: &[bool],
    eval: &EvalOptions,
) -> Result<PlacementSolution> {
    let g = &ctx.graph;
    let a = audit(ctx, phase2_routes(ctx, daps, active), eval)?;
    let unconnected = ctx.meters.iter().copied().filter(|&i| !a.forest.is_connected(i)).map(|i| g.id(i)).collect();
    let iterations = vec![IterationRecord {
        daps: a.forest.daps.len(),
        added: a.forest.daps.len(),
        relocated: 0,
        connected: a.connected,
        satisfied: a.satisfied,
        low_reliability: a.low.len(),
    }];
    Ok(PlacementSolution {
        daps: a.forest.daps.iter().map(|&d| g.id(d)).collect(),
        phase1_daps: a.forest.daps.len(),
        forest: a.forest,
        evaluation: a.evaluation,
        unconnected,
        pruned: Vec::new(),
        iterations,
        stopped_by_guard: false,
    })
}

/// Meters that meet the target when every pole hosts a DAP, after
/// repeatedly detaching the ones that do not. Returns the active mask.
pub fn satisfiable_meters(ctx: &PlanContext<'_>, eval: &EvalOptions) -> Result<Vec<bool>> {
    let g = &ctx.graph;
    let mut active: Vec<bool> = (0..g.len()).map(|i| g.is_sm(i)).collect();
    loop {
        let a = audit(ctx, phase2_routes(ctx, &ctx.poles, &active), eval)?;
        for i in 0..g.len() {
            if active[i] && !a.forest.is_connected(i) {
                active[i] = false;
            }
        }
        if a.low.is_empty() {
            return Ok(active);
        }
        for &i in &a.low {
            active[i] = false;
        }
    }
}

/// Full heuristic with default options.
pub fn plan(scenario: &Scenario) -> Result<PlacementSolution> {
    let ctx = PlanContext::new(scenario)?;
    plan_with(&ctx, &PlanOptions::default())
}

/// Phase 1 over all meters, then rounds of routing, relocation and audit;
/// meters that miss the target seed another greedy pass until none fail,
/// no pole can reach them, or a round would satisfy fewer meters than the
/// previous one. Meters still failing at the end are detached.
pub fn plan_with(ctx: &PlanContext<'_>, options: &PlanOptions) -> Result<PlacementSolution> {
    let g = &ctx.graph;
    let n = g.len();
    let mut active: Vec<bool> = (0..n).map(|i| g.is_sm(i)).collect();
    let mut is_dap = vec![false; n];
    let first = phase1_greedy(ctx, &ctx.meters, &is_dap);
    for &d in &first {
        is_dap[d] = true;
    }
    let phase1_daps = first.len();
    let mut added = phase1_daps;
    let mut iterations = Vec::new();
    let mut best: Option<Audit> = None;
    let mut stopped_by_guard = false;

    for _ in 0..ctx.poles.len().max(1) {
        let daps = sorted_daps(ctx, &is_dap);
        let mut current = audit(ctx, phase2_routes(ctx, &daps, &active), &options.eval)?;
        let mut relocated = 0;
        if options.relocate {
            let moved = relocate_centroids(ctx, &current.forest);
            if moved != current.forest.daps {
                let alt = audit(ctx, phase2_routes(ctx, &moved, &active), &options.eval)?;
                if alt.satisfied >= current.satisfied {
                    relocated = moved.iter().filter(|d| !current.forest.daps.contains(d)).count();
                    current = alt;
                }
            }
        }
        if best.as_ref().is_some_and(|b| current.satisfied < b.satisfied) {
            stopped_by_guard = true;
            break;
        }
        is_dap.iter_mut().for_each(|x| *x = false);
        for &d in &current.forest.daps {
            is_dap[d] = true;
        }
        iterations.push(IterationRecord {
            daps: current.forest.daps.len(),
            added,
            relocated,
            connected: current.connected,
            satisfied: current.satisfied,
            low_reliability: current.low.len(),
        });
        let low = current.low.clone();
        best = Some(current);
        if low.is_empty() {
            break;
        }
        let new = phase1_greedy(ctx, &low, &is_dap);
        if new.is_empty() {
            break;
        }
        added = new.len();
        for &d in &new {
            is_dap[d] = true;
        }
    }

    let mut result = match best {
        Some(b) => b,
        None => audit(ctx, phase2_routes(ctx, &[], &active), &options.eval)?,
    };
    let mut pruned = Vec::new();
    while !result.low.is_empty() {
        for &i in &result.low {
            active[i] = false;
            pruned.push(g.id(i));
        }
        result = audit(ctx, phase2_routes(ctx, &result.forest.daps, &active), &options.eval)?;
    }
    // DAPs left without members carry no traffic; dropping them leaves the
    // routes unchanged.
    let used: Vec<usize> = result
        .forest
        .daps
        .iter()
        .copied()
        .filter(|&d| result.forest.dap_of.contains(&Some(d)))
        .collect();
    if used.len() != result.forest.daps.len() {
        result = audit(ctx, phase2_routes(ctx, &used, &active), &options.eval)?;
    }

    pruned.sort_unstable();
    let mut unconnected: Vec<NodeId> =
        ctx.meters.iter().copied().filter(|&i| !result.forest.is_connected(i)).map(|i| g.id(i)).collect();
    unconnected.sort_unstable();
    Ok(PlacementSolution {
        daps: result.forest.daps.iter().map(|&d| g.id(d)).collect(),
        forest: result.forest,
        evaluation: result.evaluation,
        unconnected,
        pruned,
        iterations,
        phase1_daps,
        stopped_by_guard,
    })
}
