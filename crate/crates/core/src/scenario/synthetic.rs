//! Seeded synthetic layouts: poles follow road polylines, meters cluster in
//! groups set back from the same roads.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{
    MacParams, Node, Point, RadioParams, RangeOverrides, Scenario, TrafficClass,
    DEFAULT_PER_CEILING,
};
use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum Profile {
    Rural,
    Suburban,
    Urban,
}

struct Shape {
    /// Roads per axis direction.
    roads_per_axis: usize,
    /// Lateral wiggle of road vertices as a fraction of the side length.
    wiggle: f64,
    /// Meters per roadside cluster.
    cluster_size: usize,
    /// Std-dev of the along-road spread inside a cluster (m).
    spread: f64,
    /// Mean setback from the road (m).
    setback: f64,
}

impl Profile {
    /// Meters per square kilometre typical of the profile.
    pub fn nominal_density(self) -> f64 {
        match self {
            Profile::Rural => 23.5,
            Profile::Suburban => 155.2,
            Profile::Urban => 958.3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Rural => "rural",
            Profile::Suburban => "suburban",
            Profile::Urban => "urban",
        }
    }

    fn shape(self) -> Shape {
        match self {
            Profile::Rural => Shape { roads_per_axis: 1, wiggle: 0.08, cluster_size: 3, spread: 40.0, setback: 45.0 },
            Profile::Suburban => Shape { roads_per_axis: 3, wiggle: 0.04, cluster_size: 6, spread: 30.0, setback: 20.0 },
            Profile::Urban => Shape { roads_per_axis: 5, wiggle: 0.01, cluster_size: 12, spread: 15.0, setback: 10.0 },
        }
    }
}

impl core::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Profile> {
        match s.to_ascii_lowercase().as_str() {
            "rural" => Ok(Profile::Rural),
            "suburban" => Ok(Profile::Suburban),
            "urban" => Ok(Profile::Urban),
            other => Err(Error::InvalidParameter(alloc::format!("unknown profile {other:?}"))),
        }
    }
}

struct Road {
    vertices: Vec<Point>,
    /// Cumulative arc length at each vertex.
    cumulative: Vec<f64>,
}

impl Road {
    fn new(vertices: Vec<Point>) -> Road {
        let mut cumulative = Vec::with_capacity(vertices.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in vertices.windows(2) {
            acc += w[0].distance(&w[1]);
            cumulative.push(acc);
        }
        Road { vertices, cumulative }
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    /// Point at arc length `s` and the unit tangent there.
    fn at(&self, s: f64) -> (Point, (f64, f64)) {
        let s = s.clamp(0.0, self.length());
        let seg = match self.cumulative.iter().position(|&c| c >= s) {
            Some(0) | None => 0,
            Some(i) => i - 1,
        }
        .min(self.vertices.len() - 2);
        let (a, b) = (self.vertices[seg], self.vertices[seg + 1]);
        let len = a.distance(&b).max(1e-12);
        let t = (s - self.cumulative[seg]) / len;
        let tangent = ((b.x - a.x) / len, (b.y - a.y) / len);
        (Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)), tangent)
    }
}

fn make_roads(rng: &mut ChaCha8Rng, side: f64, shape: &Shape) -> Vec<Road> {
    let mut roads = Vec::new();
    let segments = 8;
    let jitter = Normal::new(0.0, shape.wiggle * side).expect("finite std-dev");
    for horizontal in [true, false] {
        for r in 0..shape.roads_per_axis {
            // Evenly spaced corridors with a random offset inside each band.
            let band = side / shape.roads_per_axis as f64;
            let base = band * (r as f64 + rng.random_range(0.25..0.75));
            let mut verts = Vec::with_capacity(segments + 1);
            let mut offset = 0.0;
            for k in 0..=segments {
                let along = side * k as f64 / segments as f64;
                offset = 0.5 * offset + jitter.sample(rng);
                let across = (base + offset).clamp(0.0, side);
                verts.push(if horizontal {
                    Point::new(along, across)
                } else {
                    Point::new(across, along)
                });
            }
            roads.push(Road::new(verts));
        }
    }
    roads
}

/// Picks a road by length and a uniform arc position on it.
fn sample_road_point(rng: &mut ChaCha8Rng, roads: &[Road], total: f64) -> (Point, (f64, f64)) {
    let mut s = rng.random_range(0.0..total);
    for road in roads {
        if s <= road.length() {
            return road.at(s);
        }
        s -= road.length();
    }
    let last = roads.last().expect("at least one road");
    last.at(last.length())
}

/// Deterministic synthetic scenario with `n_sm` meters and `n_poles` poles on
/// a square of `area_km2`. Meter ids are `1..=n_sm`, pole ids follow.
pub fn generate_synthetic(
    n_sm: usize,
    n_poles: usize,
    area_km2: f64,
    profile: Profile,
    seed: u64,
) -> Result<Scenario> {
    if !(area_km2 > 0.0 && area_km2.is_finite()) {
        return Err(Error::InvalidParameter("area must be positive".into()));
    }
    if n_sm < 1 || n_poles < 1 {
        return Err(Error::InvalidParameter("need at least one meter and one pole".into()));
    }
    let shape = profile.shape();
    let side = math::sqrt(area_km2) * 1000.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let roads = make_roads(&mut rng, side, &shape);
    let total: f64 = roads.iter().map(Road::length).sum();
    let clamp = |p: Point| Point::new(p.x.clamp(0.0, side), p.y.clamp(0.0, side));

    let mut nodes = Vec::with_capacity(n_sm + n_poles);

    let n_clusters = n_sm.div_ceil(shape.cluster_size).max(1);
    let anchors: Vec<(Point, (f64, f64))> =
        (0..n_clusters).map(|_| sample_road_point(&mut rng, &roads, total)).collect();
    let along = Normal::new(0.0, shape.spread).expect("finite std-dev");
    let setback = Normal::new(shape.setback, shape.setback * 0.4).expect("finite std-dev");
    for i in 0..n_sm {
        let (anchor, (tx, ty)) = anchors[rng.random_range(0..anchors.len())];
        let a = along.sample(&mut rng);
        let side_sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let b = side_sign * setback.sample(&mut rng).abs();
        let p = Point::new(anchor.x + a * tx - b * ty, anchor.y + a * ty + b * tx);
        nodes.push(Node::smart_meter(i as u32 + 1, clamp(p).x, clamp(p).y));
    }

    // Poles at equal arc spacing along the concatenated roads, lightly jittered.
    let spacing = total / n_poles as f64;
    let mut s = rng.random_range(0.0..spacing);
    for j in 0..n_poles {
        let mut rem = s;
        let mut placed = None;
        for road in &roads {
            if rem <= road.length() {
                placed = Some(road.at(rem));
                break;
            }
            rem -= road.length();
        }
        let (p, (tx, ty)) = placed.unwrap_or_else(|| sample_road_point(&mut rng, &roads, total));
        let off = rng.random_range(-3.0..3.0);
        let p = clamp(Point::new(p.x - off * ty, p.y + off * tx));
        nodes.push(Node::pole((n_sm + j) as u32 + 1, p.x, p.y));
        s += spacing;
    }

    Scenario::new(
        nodes,
        RadioParams::default(),
        MacParams::default(),
        TrafficClass::defaults(),
        0.9,
        DEFAULT_PER_CEILING,
        RangeOverrides::default(),
    )
}
