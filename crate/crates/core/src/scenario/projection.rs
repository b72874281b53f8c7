//! Equirectangular projection about a reference point. Adequate for areas of
//! a few tens of kilometres.

use super::Point;
use crate::math;

/// Mean Earth radius (m).
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoOrigin {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

impl GeoOrigin {
    /// Centroid of `(lat, lon)` pairs in degrees.
    pub fn centroid<I: IntoIterator<Item = (f64, f64)>>(coords: I) -> Option<GeoOrigin> {
        let (mut n, mut lat, mut lon) = (0usize, 0.0, 0.0);
        for (a, o) in coords {
            n += 1;
            lat += a;
            lon += o;
        }
        (n > 0).then(|| GeoOrigin {
            lat_deg: lat / n as f64,
            lon_deg: lon / n as f64,
        })
    }
}

pub fn from_lat_lon(origin: GeoOrigin, lat_deg: f64, lon_deg: f64) -> Point {
    let k = core::f64::consts::PI / 180.0;
    let cos0 = math::cos(origin.lat_deg * k);
    Point::new(
        EARTH_RADIUS_M * (lon_deg - origin.lon_deg) * k * cos0,
        EARTH_RADIUS_M * (lat_deg - origin.lat_deg) * k,
    )
}

/// Inverse of [`from_lat_lon`]; returns `(lat, lon)` in degrees.
pub fn to_lat_lon(origin: GeoOrigin, p: Point) -> (f64, f64) {
    let k = core::f64::consts::PI / 180.0;
    let cos0 = math::cos(origin.lat_deg * k);
    (
        origin.lat_deg + p.y / (EARTH_RADIUS_M * k),
        origin.lon_deg + p.x / (EARTH_RADIUS_M * k * cos0),
    )
}
