use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{Node, NodeId, Point};

#[derive(Debug, Clone, Copy)]
struct Entry {
    id: NodeId,
    point: Point,
    /// Caller-defined payload, usually a position in some node array.
    tag: usize,
}

/// Balanced 2-d tree over node positions.
///
/// Entries are stored in implicit layout: the median of every sub-slice is
/// the split node and its halves are the children, so no pointers are kept.
#[derive(Debug, Clone, Default)]
pub struct SpatialIndex {
    entries: Vec<Entry>,
}

fn coord(p: &Point, axis: usize) -> f64 {
    if axis == 0 {
        p.x
    } else {
        p.y
    }
}

impl SpatialIndex {
    /// Builds the tree over `(id, position, tag)` triples in O(n log n).
    pub fn build<I>(items: I) -> SpatialIndex
    where
        I: IntoIterator<Item = (NodeId, Point, usize)>,
    {
        let mut entries: Vec<Entry> = items
            .into_iter()
            .map(|(id, point, tag)| Entry { id, point, tag })
            .collect();
        build_rec(&mut entries, 0);
        SpatialIndex { entries }
    }

    /// Index over nodes, tagging each with its position in `nodes`.
    pub fn from_nodes<'a, I>(nodes: I) -> SpatialIndex
    where
        I: IntoIterator<Item = &'a Node>,
    {
        SpatialIndex::build(nodes.into_iter().enumerate().map(|(i, n)| (n.id, n.position, i)))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Ids within `radius` (inclusive) of `center`, ascending, without `exclude`.
    pub fn range_query(&self, center: Point, radius: f64, exclude: Option<NodeId>) -> Vec<NodeId> {
        let mut out = Vec::new();
        self.visit_within(center, radius, &mut |e| {
            if Some(e.id) != exclude {
                out.push(e.id);
            }
        });
        out.sort_unstable();
        out
    }

    /// Tags of entries within `radius` of `center`, ordered by id.
    pub fn tags_within(&self, center: Point, radius: f64) -> Vec<usize> {
        let mut hits = Vec::new();
        self.visit_within(center, radius, &mut |e| hits.push((e.id, e.tag)));
        hits.sort_unstable();
        hits.into_iter().map(|(_, t)| t).collect()
    }

    /// Nearest entry accepted by `keep`; ties go to the lowest id.
    pub fn nearest<F>(&self, target: Point, keep: F) -> Option<(NodeId, usize)>
    where
        F: Fn(usize) -> bool,
    {
        let mut best: Option<(f64, NodeId, usize)> = None;
        nearest_rec(&self.entries, 0, &target, &keep, &mut best);
        best.map(|(_, id, tag)| (id, tag))
    }

    fn visit_within<F: FnMut(&Entry)>(&self, center: Point, radius: f64, f: &mut F) {
        if !(radius >= 0.0) {
            return;
        }
        within_rec(&self.entries, 0, &center, radius, radius * radius, f);
    }
}

fn build_rec(entries: &mut [Entry], depth: usize) {
    if entries.len() <= 1 {
        return;
    }
    let axis = depth % 2;
    let mid = entries.len() / 2;
    entries.select_nth_unstable_by(mid, |a, b| {
        coord(&a.point, axis)
            .total_cmp(&coord(&b.point, axis))
            .then(a.id.cmp(&b.id))
    });
    let (left, rest) = entries.split_at_mut(mid);
    build_rec(left, depth + 1);
    build_rec(&mut rest[1..], depth + 1);
}

fn within_rec<F: FnMut(&Entry)>(
    entries: &[Entry],
    depth: usize,
    center: &Point,
    radius: f64,
    radius_sq: f64,
    f: &mut F,
) {
    if entries.is_empty() {
        return;
    }
    let axis = depth % 2;
    let mid = entries.len() / 2;
    let e = &entries[mid];
    if e.point.distance_sq(center) <= radius_sq {
        f(e);
    }
    let delta = coord(center, axis) - coord(&e.point, axis);
    if delta - radius <= 0.0 {
        within_rec(&entries[..mid], depth + 1, center, radius, radius_sq, f);
    }
    if delta + radius >= 0.0 {
        within_rec(&entries[mid + 1..], depth + 1, center, radius, radius_sq, f);
    }
}

fn nearest_rec<F: Fn(usize) -> bool>(
    entries: &[Entry],
    depth: usize,
    target: &Point,
    keep: &F,
    best: &mut Option<(f64, NodeId, usize)>,
) {
    if entries.is_empty() {
        return;
    }
    let axis = depth % 2;
    let mid = entries.len() / 2;
    let e = &entries[mid];
    if keep(e.tag) {
        let d = e.point.distance_sq(target);
        let better = match best {
            None => true,
            Some((bd, bid, _)) => match d.total_cmp(bd) {
                Ordering::Less => true,
                Ordering::Equal => e.id < *bid,
                Ordering::Greater => false,
            },
        };
        if better {
            *best = Some((d, e.id, e.tag));
        }
    }
    let delta = coord(target, axis) - coord(&e.point, axis);
    let (near, far) = if delta <= 0.0 {
        (&entries[..mid], &entries[mid + 1..])
    } else {
        (&entries[mid + 1..], &entries[..mid])
    };
    nearest_rec(near, depth + 1, target, keep, best);
    // `<=` keeps equidistant candidates on the far side reachable for the id tie-break.
    if best.is_none_or(|(bd, _, _)| delta * delta <= bd) {
        nearest_rec(far, depth + 1, target, keep, best);
    }
}
