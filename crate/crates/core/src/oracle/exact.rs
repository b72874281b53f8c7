//! Exhaustive minimum-DAP search for small instances.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mac::EvalOptions;
use crate::par;
use crate::placement::{audit, phase2_routes, satisfiable_meters, PlanContext};
use crate::scenario::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactLimits {
    pub max_poles: usize,
    pub max_sms: usize,
}

impl Default for ExactLimits {
    fn default() -> Self {
        ExactLimits { max_poles: 20, max_sms: 80 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactStatus {
    /// No smaller subset is feasible.
    Optimal,
    /// Aborted; `count` is the best feasible size found so far and every
    /// size below `lower_bound` is known to be infeasible.
    Incomplete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    pub count: usize,
    /// One optimal (or best known) DAP set, ascending id.
    pub daps: Vec<NodeId>,
    pub status: ExactStatus,
    pub lower_bound: usize,
    /// Subsets whose feasibility was evaluated.
    pub explored: u64,
    /// Subsets skipped by the coverage test.
    pub pruned: u64,
    /// Meters every feasible subset must satisfy: those that meet the
    /// target with a DAP on every pole.
    pub target: Vec<NodeId>,
}

/// Smallest DAP set under which every target meter is routed by the
/// placement's own Dijkstra and meets the reliability target; capacity is
/// enforced by the routing.
///
/// Subsets are enumerated by increasing size in lexicographic order of pole
/// position; a subset is only evaluated if the meters its poles reach
/// (through target meters) cover the whole target. `abort` is polled
/// between batches.
pub fn exact_min_daps(
    ctx: &PlanContext<'_>,
    limits: &ExactLimits,
    eval: &EvalOptions,
    abort: &dyn Fn() -> bool,
) -> Result<ExactResult> {
    let g = &ctx.graph;
    let np = ctx.poles.len();
    let nm = ctx.meters.len();
    if np > limits.max_poles || nm > limits.max_sms || nm > 128 {
        return Err(Error::OversizeInstance(format!(
            "{nm} meters / {np} poles exceeds the exact search limits ({} meters / {} poles)",
            limits.max_sms.min(128),
            limits.max_poles
        )));
    }
    let active = satisfiable_meters(ctx, eval)?;
    let target_mask: u128 = ctx
        .meters
        .iter()
        .enumerate()
        .filter(|(_, &i)| active[i])
        .fold(0, |m, (k, _)| m | 1u128 << k);
    let target: Vec<NodeId> = ctx.meters.iter().copied().filter(|&i| active[i]).map(|i| g.id(i)).collect();

    let mut poles = ctx.poles.clone();
    poles.sort_by_key(|&p| g.id(p));
    let reach: Vec<u128> = poles.iter().map(|&p| reach_mask(ctx, p, &active)).collect();

    let mut result = ExactResult {
        count: np,
        daps: poles.iter().map(|&p| g.id(p)).collect(),
        status: ExactStatus::Optimal,
        lower_bound: 0,
        explored: 0,
        pruned: 0,
        target,
    };
    if target_mask == 0 {
        result.count = 0;
        result.daps.clear();
        return Ok(result);
    }

    let feasible = |subset: &[usize]| -> Result<bool> {
        let daps: Vec<usize> = subset.iter().map(|&k| poles[k]).collect();
        let a = audit(ctx, phase2_routes(ctx, &daps, &active), eval)?;
        Ok(a.low.is_empty() && ctx.meters.iter().all(|&i| !active[i] || a.forest.is_connected(i)))
    };

    const BATCH: usize = 64;
    for k in 1..=np {
        result.lower_bound = k;
        let mut combos = Combinations::new(np, k);
        loop {
            if abort() {
                result.status = ExactStatus::Incomplete;
                return Ok(result);
            }
            let mut batch: Vec<Vec<usize>> = Vec::with_capacity(BATCH);
            while batch.len() < BATCH {
                let Some(c) = combos.next_combo() else { break };
                let covered = c.iter().fold(0u128, |m, &j| m | reach[j]);
                if covered & target_mask == target_mask {
                    batch.push(c);
                } else {
                    result.pruned += 1;
                }
            }
            if batch.is_empty() {
                break;
            }
            let verdicts = par::map_indexed(batch.len(), |b| feasible(&batch[b]));
            for (b, v) in verdicts.into_iter().enumerate() {
                result.explored += 1;
                if v? {
                    result.count = k;
                    result.daps = batch[b].iter().map(|&j| g.id(poles[j])).collect();
                    return Ok(result);
                }
            }
        }
    }
    Ok(result)
}

/// Target meters reachable from pole `p` through target meters, as a bit
/// set over meter positions.
fn reach_mask(ctx: &PlanContext<'_>, p: usize, active: &[bool]) -> u128 {
    let g = &ctx.graph;
    let mut seen = vec![false; g.len()];
    let mut stack: Vec<usize> = g.sm_links(p).map(|l| l.to).filter(|&m| active[m]).collect();
    for &m in &stack {
        seen[m] = true;
    }
    let mut mask = 0u128;
    while let Some(v) = stack.pop() {
        mask |= 1u128 << ctx.meter_slot[v].expect("meter");
        for l in g.sm_links(v) {
            if active[l.to] && !seen[l.to] {
                seen[l.to] = true;
                stack.push(l.to);
            }
        }
    }
    mask
}

/// `k`-subsets of `0..n` in lexicographic order.
struct Combinations {
    n: usize,
    idx: Vec<usize>,
    started: bool,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations { n, idx: (0..k).collect(), started: false, done: k > n }
    }

    fn next_combo(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(self.idx.clone());
        }
        let k = self.idx.len();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                return Some(self.idx.clone());
            }
        }
        self.done = true;
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_in_order() {
        let mut c = Combinations::new(4, 2);
        let mut all = Vec::new();
        while let Some(x) = c.next_combo() {
            all.push(x);
        }
        assert_eq!(all, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert!(Combinations::new(2, 3).next_combo().is_none());
    }
}
