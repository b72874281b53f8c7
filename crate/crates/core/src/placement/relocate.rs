use alloc::vec;
use alloc::vec::Vec;

use super::{PlanContext, RoutingForest};
use crate::scenario::Point;

/// Can every member of `cluster` reach pole `p` through members only?
fn reaches_all(ctx: &PlanContext<'_>, p: usize, cluster: &[usize]) -> bool {
    let g = &ctx.graph;
    let mut inside = vec![false; g.len()];
    for &m in cluster {
        inside[m] = true;
    }
    let mut seen = vec![false; g.len()];
    let mut stack: Vec<usize> = Vec::new();
    let mut reached = 0;
    for l in g.sm_links(p) {
        if inside[l.to] && !seen[l.to] {
            seen[l.to] = true;
            stack.push(l.to);
        }
    }
    while let Some(v) = stack.pop() {
        reached += 1;
        for l in g.sm_links(v) {
            if inside[l.to] && !seen[l.to] {
                seen[l.to] = true;
                stack.push(l.to);
            }
        }
    }
    reached == cluster.len()
}

/// Moves each DAP, in id order, to the free pole nearest the mean position
/// of its cluster, provided every cluster member can still reach the new
/// pole. Returns the new DAP set, ascending id.
pub fn relocate_centroids(ctx: &PlanContext<'_>, forest: &RoutingForest) -> Vec<usize> {
    let g = &ctx.graph;
    let mut is_dap = vec![false; g.len()];
    for &d in &forest.daps {
        is_dap[d] = true;
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); forest.daps.len()];
    for &i in &ctx.meters {
        if let Some(d) = forest.dap_of[i] {
            let k = forest.daps.binary_search_by_key(&g.id(d), |&x| g.id(x)).expect("dap");
            members[k].push(i);
        }
    }
    let mut out = forest.daps.clone();
    for (k, &d) in forest.daps.iter().enumerate() {
        let cluster = &members[k];
        if cluster.is_empty() {
            continue;
        }
        let (sx, sy) = cluster.iter().fold((0.0, 0.0), |(x, y), &i| {
            let p = ctx.position(i);
            (x + p.x, y + p.y)
        });
        let centre = Point::new(sx / cluster.len() as f64, sy / cluster.len() as f64);
        let Some(c) = ctx.nearest_pole(centre, |p| p == d || !is_dap[p]) else { continue };
        if c == d || !reaches_all(ctx, c, cluster) {
            continue;
        }
        is_dap[d] = false;
        is_dap[c] = true;
        out[k] = c;
    }
    out.sort_by_key(|&d| g.id(d));
    out
}
