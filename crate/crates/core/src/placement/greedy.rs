//! Greedy pole selection over multi-hop coverage sets.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use super::PlanContext;
use crate::scenario::NodeId;

/// Connected components of the meter graph restricted to `members`.
/// Returns the component label per node (`usize::MAX` outside) and sizes.
fn components(ctx: &PlanContext<'_>, members: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let g = &ctx.graph;
    let mut label = vec![usize::MAX; g.len()];
    let mut inside = vec![false; g.len()];
    for &m in members {
        inside[m] = true;
    }
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for &m in members {
        if label[m] != usize::MAX {
            continue;
        }
        let c = sizes.len();
        label[m] = c;
        stack.push(m);
        let mut size = 0;
        while let Some(v) = stack.pop() {
            size += 1;
            for l in g.sm_links(v) {
                if inside[l.to] && label[l.to] == usize::MAX {
                    label[l.to] = c;
                    stack.push(l.to);
                }
            }
        }
        sizes.push(size);
    }
    (label, sizes)
}

/// Distinct components pole `p` reaches through its own meter links.
fn touched(ctx: &PlanContext<'_>, p: usize, label: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = ctx.graph.sm_links(p).map(|l| label[l.to]).filter(|&c| c != usize::MAX).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Picks poles (node indices, in selection order) covering the meters in
/// `uncovered`. A pole covers every uncovered meter reachable from it over
/// pole-meter and then meter-meter links through uncovered meters. Each
/// round takes the pole covering the most still-uncovered meters, lowest
/// id first on ties; poles with `is_dap` set are not candidates. Stops when
/// no candidate covers anything.
pub fn phase1_greedy(ctx: &PlanContext<'_>, uncovered: &[usize], is_dap: &[bool]) -> Vec<usize> {
    let (label, sizes) = components(ctx, uncovered);
    let mut covered = vec![false; sizes.len()];
    let sets: Vec<(usize, Vec<usize>)> = ctx
        .poles
        .iter()
        .filter(|&&p| !is_dap[p])
        .map(|&p| (p, touched(ctx, p, &label)))
        .filter(|(_, t)| !t.is_empty())
        .collect();
    let gain = |set: &[usize], covered: &[bool]| -> usize { set.iter().filter(|&&c| !covered[c]).map(|&c| sizes[c]).sum() };

    // Lazy greedy: gains only shrink, so a popped entry whose stored gain
    // is still current is a true maximum.
    let mut heap: BinaryHeap<(usize, Reverse<NodeId>, usize)> = sets
        .iter()
        .enumerate()
        .map(|(k, (p, t))| (gain(t, &covered), Reverse(ctx.graph.id(*p)), k))
        .collect();
    let mut picked = Vec::new();
    while let Some((stored, id, k)) = heap.pop() {
        let now = gain(&sets[k].1, &covered);
        if now == 0 {
            continue;
        }
        if now != stored {
            heap.push((now, id, k));
            continue;
        }
        for &c in &sets[k].1 {
            covered[c] = true;
        }
        picked.push(sets[k].0);
    }
    picked
}

/// Meters reachable from some pole at all; the rest can never be connected.
pub fn coverable_meters(ctx: &PlanContext<'_>) -> Vec<bool> {
    let g = &ctx.graph;
    let mut seen = vec![false; g.len()];
    let mut stack: Vec<usize> = Vec::new();
    for &p in &ctx.poles {
        for l in g.sm_links(p) {
            if !seen[l.to] {
                seen[l.to] = true;
                stack.push(l.to);
            }
        }
    }
    while let Some(v) = stack.pop() {
        for l in g.sm_links(v) {
            if !seen[l.to] {
                seen[l.to] = true;
                stack.push(l.to);
            }
        }
    }
    seen
}
