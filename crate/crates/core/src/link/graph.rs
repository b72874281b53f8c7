use alloc::vec::Vec;

use super::{link_cost, sinr};
use crate::error::Result;
use crate::par;
use crate::scenario::{NodeId, NodeKind, Scenario, SpatialIndex, TrafficCategory};

/// Co-located antennas are evaluated at this separation (m).
const MIN_LINK_DISTANCE: f64 = 1.0;

/// PER resolution of the route cost. Below a few hundred metres the
/// analytic PER underflows towards 1e-20 and summed costs stop telling hop
/// counts apart; every link at least this good costs the same.
pub const ROUTE_PER_FLOOR: f64 = 1e-4;

/// One usable radio link as seen from its source node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    /// Index of the far end in `Scenario::nodes`.
    pub to: usize,
    pub distance: f64,
    pub sinr_db: f64,
    /// PER of the largest packet of each category, indexed by
    /// [`TrafficCategory`] (MC first).
    pub per: [f64; 2],
    /// PER of the largest packet of any class; drives the route cost.
    pub route_per: f64,
    /// `log(1/(1 - max(route_per, ROUTE_PER_FLOOR)))`.
    pub cost: f64,
}

impl Link {
    pub fn per_for(&self, category: TrafficCategory) -> f64 {
        self.per[category.index()]
    }
}

/// Feasible SM-SM and SM-pole links. Pole-pole links are never used.
///
/// Links are kept only within the scenario ranges and while the PER of the
/// largest packet stays at or below the scenario's PER ceiling. Adjacency
/// lists are sorted by neighbour id.
#[derive(Debug, Clone)]
pub struct LinkGraph {
    ids: Vec<NodeId>,
    kinds: Vec<NodeKind>,
    adj: Vec<Vec<Link>>,
    /// `(id, index)` sorted by id.
    lookup: Vec<(NodeId, usize)>,
}

fn largest_packet(s: &Scenario, category: Option<TrafficCategory>) -> u32 {
    let pick = |c: Option<TrafficCategory>| {
        s.traffic
            .iter()
            .filter(|t| c.is_none_or(|c| t.category == c))
            .map(|t| t.packet_size)
            .max()
    };
    pick(category).or_else(|| pick(None)).unwrap_or(1)
}

impl LinkGraph {
    pub fn build(s: &Scenario) -> Result<LinkGraph> {
        let n = s.nodes.len();
        let sm_index = SpatialIndex::build(
            s.nodes
                .iter()
                .enumerate()
                .filter(|(_, nd)| nd.kind == NodeKind::SmartMeter)
                .map(|(i, nd)| (nd.id, nd.position, i)),
        );
        let pole_index = SpatialIndex::build(
            s.nodes
                .iter()
                .enumerate()
                .filter(|(_, nd)| nd.kind == NodeKind::Pole)
                .map(|(i, nd)| (nd.id, nd.position, i)),
        );
        let sizes = [
            largest_packet(s, Some(TrafficCategory::Mc)),
            largest_packet(s, Some(TrafficCategory::Nc)),
        ];
        let route_size = largest_packet(s, None);

        let make = |i: usize, j: usize| -> Result<Option<Link>> {
            let (a, b) = (&s.nodes[i], &s.nodes[j]);
            let distance = a.position.distance(&b.position);
            let walls = u32::from(a.indoor) + u32::from(b.indoor);
            let g = sinr(&s.radio, distance.max(MIN_LINK_DISTANCE), a.height, b.height, walls)?;
            let route_per = s.radio.per_curve.per(g, route_size);
            if route_per > s.per_ceiling {
                return Ok(None);
            }
            Ok(Some(Link {
                to: j,
                distance,
                sinr_db: g,
                per: [s.radio.per_curve.per(g, sizes[0]), s.radio.per_curve.per(g, sizes[1])],
                route_per,
                cost: link_cost(route_per.max(ROUTE_PER_FLOOR)),
            }))
        };

        let lists: Vec<Result<Vec<Link>>> = par::map_indexed(n, |i| {
            let node = &s.nodes[i];
            let mut hits: Vec<usize> = Vec::new();
            if node.kind == NodeKind::SmartMeter {
                hits.extend(sm_index.tags_within(node.position, s.sm_range).into_iter().filter(|&j| j != i));
            }
            // Pole lists mirror the SM side: SMs within pole range.
            let (other, radius) = match node.kind {
                NodeKind::SmartMeter => (&pole_index, s.pole_range),
                NodeKind::Pole => (&sm_index, s.pole_range),
            };
            hits.extend(other.tags_within(node.position, radius));
            let mut out = Vec::with_capacity(hits.len());
            for j in hits {
                if let Some(l) = make(i, j)? {
                    out.push(l);
                }
            }
            out.sort_by_key(|l| s.nodes[l.to].id);
            Ok(out)
        });
        let adj = lists.into_iter().collect::<Result<Vec<_>>>()?;

        let mut lookup: Vec<(NodeId, usize)> = s.nodes.iter().enumerate().map(|(i, nd)| (nd.id, i)).collect();
        lookup.sort_unstable();
        Ok(LinkGraph {
            ids: s.nodes.iter().map(|nd| nd.id).collect(),
            kinds: s.nodes.iter().map(|nd| nd.kind).collect(),
            adj,
            lookup,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, index: usize) -> NodeId {
        self.ids[index]
    }

    pub fn kind(&self, index: usize) -> NodeKind {
        self.kinds[index]
    }

    pub fn is_sm(&self, index: usize) -> bool {
        self.kinds[index] == NodeKind::SmartMeter
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.lookup
            .binary_search_by_key(&id, |&(k, _)| k)
            .ok()
            .map(|p| self.lookup[p].1)
    }

    /// All usable links at `index`, ordered by neighbour id.
    pub fn links(&self, index: usize) -> &[Link] {
        &self.adj[index]
    }

    /// Links from `index` to smart meters.
    pub fn sm_links(&self, index: usize) -> impl Iterator<Item = &Link> + '_ {
        self.adj[index].iter().filter(move |l| self.is_sm(l.to))
    }

    /// Links from `index` to poles.
    pub fn pole_links(&self, index: usize) -> impl Iterator<Item = &Link> + '_ {
        self.adj[index].iter().filter(move |l| !self.is_sm(l.to))
    }

    pub fn link(&self, from: usize, to: usize) -> Option<&Link> {
        let target = self.ids[to];
        self.adj[from]
            .binary_search_by_key(&target, |l| self.ids[l.to])
            .ok()
            .map(|p| &self.adj[from][p])
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }
}
