//! Geodesic distance, geofence containment and the subscriber grid index.
//!
//! Containment for polygons is planar ray casting on (lat, lon). Polygons that
//! would need spherical treatment (antimeridian crossings, pole enclosures) are
//! rejected when the geofence is built, so every accepted shape has a plain
//! lat/lon bounding box. Circles are measured with the haversine distance on a
//! sphere of mean Earth radius.
//!
//! The grid index buckets subscribers into `cell_deg`-sized lat/lon cells. A
//! query enumerates the cells overlapping the geofence's bounding box and then
//! exact-checks every candidate, so results always equal a brute-force filter
//! over all stored positions.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::Timestamp;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Upper bound on circle radii.
pub const MAX_RADIUS_M: f64 = 1_000_000.0;

/// Default grid cell size, roughly 5.5 km at the equator.
pub const DEFAULT_CELL_DEG: f64 = 0.05;

// Padding applied to circle bounding boxes so float rounding in the box never
// drops a point that the haversine test accepts.
const BBOX_PAD_DEG: f64 = 1e-7;

// Tolerance for treating a point as lying on a polygon edge.
const EDGE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("coordinate is not finite")]
    NonFinite,
    #[error("latitude {0} outside [-90, 90]")]
    LatOutOfRange(f64),
    #[error("longitude {0} outside [-180, 180]")]
    LonOutOfRange(f64),
    #[error("circle radius {0} m outside (0, 1000000]")]
    RadiusOutOfRange(f64),
    #[error("polygon needs at least 3 distinct vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon repeats vertex {0} consecutively")]
    DuplicateVertex(usize),
    #[error("polygon edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("polygon crosses the antimeridian or encloses a pole")]
    CrossesAntimeridian,
    #[error("grid cell size {0} must be in (0, 180]")]
    InvalidCellSize(f64),
    #[error("stale location update: stored {stored}, attempted {attempted}")]
    StaleUpdate { stored: Timestamp, attempted: Timestamp },
}

/// A validated WGS84-style point in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCoordinate")]
pub struct Coordinate {
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
struct RawCoordinate {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawCoordinate> for Coordinate {
    type Error = GeoError;

    fn try_from(raw: RawCoordinate) -> Result<Self, Self::Error> {
        Coordinate::new(raw.lat, raw.lon)
    }
}

impl Coordinate {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(GeoError::NonFinite);
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::LatOutOfRange(lat));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::LonOutOfRange(lon));
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_m(a: Coordinate, b: Coordinate) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    let h = h.clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_M * h.sqrt().atan2((1.0 - h).sqrt())
}

/// Axis-aligned lat/lon box. When `min_lon > max_lon` the box wraps across
/// the antimeridian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn wraps(&self) -> bool {
        self.min_lon > self.max_lon
    }

    /// The one or two plain longitude intervals this box covers.
    pub fn lon_intervals(&self) -> Vec<(f64, f64)> {
        if self.wraps() {
            vec![(-180.0, self.max_lon), (self.min_lon, 180.0)]
        } else {
            vec![(self.min_lon, self.max_lon)]
        }
    }

    pub fn contains(&self, p: Coordinate) -> bool {
        if p.lat < self.min_lat || p.lat > self.max_lat {
            return false;
        }
        self.lon_intervals()
            .iter()
            .any(|&(lo, hi)| p.lon >= lo && p.lon <= hi)
    }
}

/// Affected-area shape. Polygon rings are implicitly closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", try_from = "RawGeofence")]
pub enum Geofence {
    Circle { center: Coordinate, radius_m: f64 },
    Polygon { ring: Vec<Coordinate> },
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum RawGeofence {
    Circle { center: Coordinate, radius_m: f64 },
    Polygon { ring: Vec<Coordinate> },
}

impl TryFrom<RawGeofence> for Geofence {
    type Error = GeoError;

    fn try_from(raw: RawGeofence) -> Result<Self, Self::Error> {
        match raw {
            RawGeofence::Circle { center, radius_m } => Geofence::circle(center, radius_m),
            RawGeofence::Polygon { ring } => Geofence::polygon(ring),
        }
    }
}

impl Geofence {
    pub fn circle(center: Coordinate, radius_m: f64) -> Result<Self, GeoError> {
        if !radius_m.is_finite() || radius_m <= 0.0 || radius_m > MAX_RADIUS_M {
            return Err(GeoError::RadiusOutOfRange(radius_m));
        }
        Ok(Geofence::Circle { center, radius_m })
    }

    /// Builds a polygon, dropping an explicit closing vertex if the caller
    /// repeated the first vertex at the end.
    pub fn polygon(mut ring: Vec<Coordinate>) -> Result<Self, GeoError> {
        if ring.len() > 3 && ring.first() == ring.last() {
            ring.pop();
        }
        validate_ring(&ring)?;
        Ok(Geofence::Polygon { ring })
    }

    pub fn bounding_box(&self) -> BoundingBox {
        match self {
            Geofence::Circle { center, radius_m } => circle_bbox(*center, *radius_m),
            Geofence::Polygon { ring } => ring_bbox(ring),
        }
    }

    /// Boundary-inclusive containment test.
    pub fn contains(&self, p: Coordinate) -> bool {
        match self {
            Geofence::Circle { center, radius_m } => haversine_m(*center, p) <= *radius_m,
            Geofence::Polygon { ring } => ring_contains(ring, p),
        }
    }
}

/// Free-function form of [`Geofence::contains`].
pub fn geofence_contains(g: &Geofence, p: Coordinate) -> bool {
    g.contains(p)
}

fn circle_bbox(center: Coordinate, radius_m: f64) -> BoundingBox {
    let ang = radius_m / EARTH_RADIUS_M;
    let dlat = ang.to_degrees() + BBOX_PAD_DEG;
    let min_lat = center.lat - dlat;
    let max_lat = center.lat + dlat;
    if min_lat <= -90.0 || max_lat >= 90.0 {
        // The cap reaches a pole, so every longitude is in play.
        return BoundingBox {
            min_lat: min_lat.max(-90.0),
            max_lat: max_lat.min(90.0),
            min_lon: -180.0,
            max_lon: 180.0,
        };
    }
    let ratio = ang.sin() / center.lat.to_radians().cos();
    if ratio >= 1.0 {
        return BoundingBox { min_lat, max_lat, min_lon: -180.0, max_lon: 180.0 };
    }
    let dlon = ratio.asin().to_degrees() * (1.0 + 1e-9) + BBOX_PAD_DEG;
    if dlon >= 180.0 {
        return BoundingBox { min_lat, max_lat, min_lon: -180.0, max_lon: 180.0 };
    }
    let mut min_lon = center.lon - dlon;
    let mut max_lon = center.lon + dlon;
    if min_lon < -180.0 {
        min_lon += 360.0;
    }
    if max_lon > 180.0 {
        max_lon -= 360.0;
    }
    BoundingBox { min_lat, max_lat, min_lon, max_lon }
}

fn ring_bbox(ring: &[Coordinate]) -> BoundingBox {
    let mut bb = BoundingBox {
        min_lat: f64::INFINITY,
        max_lat: f64::NEG_INFINITY,
        min_lon: f64::INFINITY,
        max_lon: f64::NEG_INFINITY,
    };
    for c in ring {
        bb.min_lat = bb.min_lat.min(c.lat);
        bb.max_lat = bb.max_lat.max(c.lat);
        bb.min_lon = bb.min_lon.min(c.lon);
        bb.max_lon = bb.max_lon.max(c.lon);
    }
    bb
}

// Planar helpers: x = lon, y = lat.
fn cross(o: Coordinate, a: Coordinate, b: Coordinate) -> f64 {
    (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon)
}

fn within_segment_box(a: Coordinate, b: Coordinate, p: Coordinate) -> bool {
    p.lon >= a.lon.min(b.lon)
        && p.lon <= a.lon.max(b.lon)
        && p.lat >= a.lat.min(b.lat)
        && p.lat <= a.lat.max(b.lat)
}

fn on_segment(a: Coordinate, b: Coordinate, p: Coordinate) -> bool {
    within_segment_box(a, b, p) && cross(a, b, p).abs() <= EDGE_EPS
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

fn segments_intersect(p1: Coordinate, p2: Coordinate, p3: Coordinate, p4: Coordinate) -> bool {
    let d1 = sign(cross(p3, p4, p1));
    let d2 = sign(cross(p3, p4, p2));
    let d3 = sign(cross(p1, p2, p3));
    let d4 = sign(cross(p1, p2, p4));
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    (d1 == 0 && within_segment_box(p3, p4, p1))
        || (d2 == 0 && within_segment_box(p3, p4, p2))
        || (d3 == 0 && within_segment_box(p1, p2, p3))
        || (d4 == 0 && within_segment_box(p1, p2, p4))
}

fn validate_ring(ring: &[Coordinate]) -> Result<(), GeoError> {
    let n = ring.len();
    if n < 3 {
        return Err(GeoError::TooFewVertices(n));
    }
    for i in 0..n {
        if ring[i] == ring[(i + 1) % n] {
            return Err(GeoError::DuplicateVertex((i + 1) % n));
        }
    }
    let mut distinct: Vec<(u64, u64)> = ring.iter().map(|c| (c.lat.to_bits(), c.lon.to_bits())).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(GeoError::TooFewVertices(distinct.len()));
    }
    for i in 0..n {
        let j = (i + 1) % n;
        if (ring[i].lon - ring[j].lon).abs() > 180.0 {
            return Err(GeoError::CrossesAntimeridian);
        }
    }
    let bb = ring_bbox(ring);
    if bb.max_lon - bb.min_lon > 180.0 {
        return Err(GeoError::CrossesAntimeridian);
    }

    let edge = |i: usize| (ring[i], ring[(i + 1) % n]);
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = edge(i);
            let (c, d) = edge(j);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Shared vertex is expected; a collinear fold-back is not.
                let (prev, shared, next) = if j == i + 1 { (a, b, d) } else { (c, a, b) };
                let dir_in = (shared.lon - prev.lon, shared.lat - prev.lat);
                let dir_out = (next.lon - shared.lon, next.lat - shared.lat);
                let dot = dir_in.0 * dir_out.0 + dir_in.1 * dir_out.1;
                if cross(prev, shared, next) == 0.0 && dot < 0.0 {
                    return Err(GeoError::SelfIntersecting(i, j));
                }
            } else if segments_intersect(a, b, c, d) {
                return Err(GeoError::SelfIntersecting(i, j));
            }
        }
    }
    Ok(())
}

fn ring_contains(ring: &[Coordinate], p: Coordinate) -> bool {
    if !ring_bbox(ring).contains(p) {
        return false;
    }
    let n = ring.len();
    for i in 0..n {
        if on_segment(ring[i], ring[(i + 1) % n], p) {
            return true;
        }
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (yi, xi) = (ring[i].lat, ring[i].lon);
        let (yj, xj) = (ring[j].lat, ring[j].lon);
        if (yi > p.lat) != (yj > p.lat) {
            let x_cross = (xj - xi) * (p.lat - yi) / (yj - yi) + xi;
            if p.lon < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

type CellKey = (i64, i64);

/// Grid index over subscriber last-known positions.
///
/// Every subscriber lives in exactly one cell, the one its current position
/// falls into. Wrap in a `RwLock` for shared use; queries take `&self` and see
/// a consistent view of cells and positions.
#[derive(Debug, Clone)]
pub struct GeoIndex<K> {
    cell_deg: f64,
    cells: HashMap<CellKey, HashSet<K>>,
    positions: HashMap<K, (Coordinate, Timestamp)>,
}

impl<K> GeoIndex<K>
where
    K: Clone + Eq + Hash,
{
    pub fn new(cell_deg: f64) -> Result<Self, GeoError> {
        if !cell_deg.is_finite() || cell_deg <= 0.0 || cell_deg > 180.0 {
            return Err(GeoError::InvalidCellSize(cell_deg));
        }
        Ok(Self { cell_deg, cells: HashMap::new(), positions: HashMap::new() })
    }

    pub fn cell_deg(&self) -> f64 {
        self.cell_deg
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn occupied_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn position(&self, id: &K) -> Option<(Coordinate, Timestamp)> {
        self.positions.get(id).copied()
    }

    pub fn positions(&self) -> impl Iterator<Item = (&K, &(Coordinate, Timestamp))> {
        self.positions.iter()
    }

    fn cell_index(&self, v: f64) -> i64 {
        (v / self.cell_deg).floor() as i64
    }

    fn cell_of(&self, p: Coordinate) -> CellKey {
        (self.cell_index(p.lat), self.cell_index(p.lon))
    }

    /// Records `p` as the latest position of `id` at time `t`. Updates older
    /// than the stored timestamp are rejected and leave the index untouched.
    pub fn upsert(&mut self, id: K, p: Coordinate, t: Timestamp) -> Result<(), GeoError> {
        let new_cell = self.cell_of(p);
        match self.positions.entry(id.clone()) {
            Entry::Occupied(mut slot) => {
                let (old_p, old_t) = *slot.get();
                if t < old_t {
                    return Err(GeoError::StaleUpdate { stored: old_t, attempted: t });
                }
                slot.insert((p, t));
                let old_cell = (self.cell_index(old_p.lat), self.cell_index(old_p.lon));
                if old_cell != new_cell {
                    if let Some(set) = self.cells.get_mut(&old_cell) {
                        set.remove(&id);
                        if set.is_empty() {
                            self.cells.remove(&old_cell);
                        }
                    }
                    self.cells.entry(new_cell).or_default().insert(id);
                }
            }
            Entry::Vacant(slot) => {
                slot.insert((p, t));
                self.cells.entry(new_cell).or_default().insert(id);
            }
        }
        Ok(())
    }

    pub fn remove(&mut self, id: &K) -> Option<(Coordinate, Timestamp)> {
        let (p, t) = self.positions.remove(id)?;
        let cell = self.cell_of(p);
        if let Some(set) = self.cells.get_mut(&cell) {
            set.remove(id);
            if set.is_empty() {
                self.cells.remove(&cell);
            }
        }
        Some((p, t))
    }

    /// Ids whose latest position lies inside `g`.
    pub fn query(&self, g: &Geofence) -> HashSet<K> {
        let mut out = HashSet::new();
        if self.positions.is_empty() {
            return out;
        }
        let bb = g.bounding_box();
        let lat_range = (self.cell_index(bb.min_lat), self.cell_index(bb.max_lat));
        let lon_ranges: Vec<(i64, i64)> = bb
            .lon_intervals()
            .iter()
            .map(|&(lo, hi)| (self.cell_index(lo), self.cell_index(hi)))
            .collect();

        let lat_span = (lat_range.1 - lat_range.0 + 1) as u128;
        let lon_span: u128 = lon_ranges.iter().map(|r| (r.1 - r.0 + 1) as u128).sum();
        let mut check = |ids: &HashSet<K>| {
            for id in ids {
                if let Some((p, _)) = self.positions.get(id) {
                    if g.contains(*p) {
                        out.insert(id.clone());
                    }
                }
            }
        };

        if lat_span * lon_span > self.cells.len() as u128 {
            // Wide box: cheaper to scan occupied cells than enumerate keys.
            for (&(la, lo), ids) in &self.cells {
                let in_lat = la >= lat_range.0 && la <= lat_range.1;
                if in_lat && lon_ranges.iter().any(|r| lo >= r.0 && lo <= r.1) {
                    check(ids);
                }
            }
        } else {
            for la in lat_range.0..=lat_range.1 {
                for r in &lon_ranges {
                    for lo in r.0..=r.1 {
                        if let Some(ids) = self.cells.get(&(la, lo)) {
                            check(ids);
                        }
                    }
                }
            }
        }
        out
    }

    #[cfg(test)]
    fn check_invariants(&self) {
        let mut seen = 0;
        for (key, ids) in &self.cells {
            assert!(!ids.is_empty());
            for id in ids {
                let (p, _) = self.positions[id];
                assert_eq!(self.cell_of(p), *key);
                seen += 1;
            }
        }
        assert_eq!(seen, self.positions.len());
    }
}

/// The `k` resources closest to `p`, nearest first, ties broken by id.
pub fn k_nearest<K>(resources: &[(K, Coordinate)], p: Coordinate, k: usize) -> Vec<K>
where
    K: Clone + Ord,
{
    let mut ranked: Vec<(f64, &K)> = resources.iter().map(|(id, c)| (haversine_m(p, *c), id)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    ranked.into_iter().take(k).map(|(_, id)| id.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(lat: f64, lon: f64) -> Coordinate {
        Coordinate::new(lat, lon).unwrap()
    }

    fn unit_square() -> Geofence {
        Geofence::polygon(vec![c(0.0, 0.0), c(0.0, 1.0), c(1.0, 1.0), c(1.0, 0.0)]).unwrap()
    }

    #[test]
    fn coordinate_ranges() {
        assert!(Coordinate::new(90.0, 180.0).is_ok());
        assert_eq!(Coordinate::new(91.0, 0.0), Err(GeoError::LatOutOfRange(91.0)));
        assert_eq!(Coordinate::new(0.0, -180.5), Err(GeoError::LonOutOfRange(-180.5)));
        assert_eq!(Coordinate::new(f64::NAN, 0.0), Err(GeoError::NonFinite));
        let err = serde_json::from_str::<Coordinate>(r#"{"lat":95,"lon":0}"#).unwrap_err();
        assert!(err.to_string().contains("latitude"));
    }

    #[test]
    fn haversine_anchors() {
        let one_deg = std::f64::consts::PI * EARTH_RADIUS_M / 180.0;
        assert_eq!(haversine_m(c(12.0, 34.0), c(12.0, 34.0)), 0.0);
        assert!((haversine_m(c(0.0, 0.0), c(0.0, 1.0)) - 111_194.93).abs() < 0.01);
        assert!((haversine_m(c(0.0, 0.0), c(0.0, 1.0)) - one_deg).abs() / one_deg < 1e-9);
        assert!((haversine_m(c(0.0, 0.0), c(0.0, 180.0)) - 20_015_086.8).abs() < 0.1);
    }

    #[test]
    fn containment_examples() {
        assert!(unit_square().contains(c(0.5, 0.5)));
        assert!(unit_square().contains(c(1.0, 1.0)));
        assert!(unit_square().contains(c(0.0, 0.5)));
        assert!(!unit_square().contains(c(1.5, 0.5)));
        let circle = Geofence::circle(c(0.0, 0.0), 111_194.0).unwrap();
        assert!(!circle.contains(c(0.0, 1.0)));
        let circle = Geofence::circle(c(0.0, 0.0), 111_195.0).unwrap();
        assert!(circle.contains(c(0.0, 1.0)));
    }

    #[test]
    fn concave_polygon() {
        // U shape open to the north.
        let u = Geofence::polygon(vec![
            c(0.0, 0.0),
            c(0.0, 3.0),
            c(3.0, 3.0),
            c(3.0, 2.0),
            c(1.0, 2.0),
            c(1.0, 1.0),
            c(3.0, 1.0),
            c(3.0, 0.0),
        ])
        .unwrap();
        assert!(u.contains(c(2.0, 0.5)));
        assert!(!u.contains(c(2.0, 1.5)));
        assert!(u.contains(c(0.5, 1.5)));
    }

    #[test]
    fn geofence_validation() {
        assert_eq!(Geofence::circle(c(0.0, 0.0), 0.0), Err(GeoError::RadiusOutOfRange(0.0)));
        assert!(Geofence::circle(c(0.0, 0.0), MAX_RADIUS_M).is_ok());
        assert!(Geofence::circle(c(0.0, 0.0), MAX_RADIUS_M + 1.0).is_err());
        assert_eq!(Geofence::polygon(vec![c(0.0, 0.0), c(1.0, 1.0)]), Err(GeoError::TooFewVertices(2)));
        assert_eq!(
            Geofence::polygon(vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 1.0), c(1.0, 0.0)]),
            Err(GeoError::DuplicateVertex(1))
        );
        // Bow tie.
        assert!(matches!(
            Geofence::polygon(vec![c(0.0, 0.0), c(1.0, 1.0), c(1.0, 0.0), c(0.0, 1.0)]),
            Err(GeoError::SelfIntersecting(..))
        ));
        // Degenerate: all collinear.
        assert!(matches!(
            Geofence::polygon(vec![c(0.0, 0.0), c(0.0, 2.0), c(0.0, 1.0)]),
            Err(GeoError::SelfIntersecting(..))
        ));
        assert_eq!(
            Geofence::polygon(vec![c(0.0, 179.0), c(1.0, -179.0), c(-1.0, -179.0)]),
            Err(GeoError::CrossesAntimeridian)
        );
        // Explicit closing vertex is accepted.
        let closed = Geofence::polygon(vec![c(0.0, 0.0), c(0.0, 1.0), c(1.0, 1.0), c(0.0, 0.0)]).unwrap();
        assert!(matches!(closed, Geofence::Polygon { ref ring } if ring.len() == 3));
    }

    #[test]
    fn geofence_serde_validates() {
        let ok = r#"{"type":"circle","center":{"lat":1.0,"lon":2.0},"radius_m":50.0}"#;
        let g: Geofence = serde_json::from_str(ok).unwrap();
        assert_eq!(serde_json::to_string(&g).unwrap(), ok);
        let bad = r#"{"type":"circle","center":{"lat":1.0,"lon":2.0},"radius_m":-5.0}"#;
        assert!(serde_json::from_str::<Geofence>(bad).is_err());
    }

    #[test]
    fn circle_bbox_wraps_antimeridian() {
        let g = Geofence::circle(c(0.0, 179.99), 10_000.0).unwrap();
        let bb = g.bounding_box();
        assert!(bb.wraps());
        assert!(bb.contains(c(0.0, -179.99)));
        assert!(g.contains(c(0.0, -179.99)));
    }

    #[test]
    fn index_upsert_and_move() {
        let mut idx = GeoIndex::new(1.0).unwrap();
        idx.upsert("a", c(0.5, 0.5), Timestamp(1)).unwrap();
        assert_eq!(idx.len(), 1);
        assert_eq!(idx.occupied_cells(), 1);
        idx.upsert("a", c(2.5, 2.5), Timestamp(2)).unwrap();
        assert_eq!(idx.cells.get(&(0, 0)), None);
        assert!(idx.cells[&(2, 2)].contains("a"));
        idx.check_invariants();

        let before = idx.clone();
        let err = idx.upsert("a", c(5.0, 5.0), Timestamp(1)).unwrap_err();
        assert!(matches!(err, GeoError::StaleUpdate { .. }));
        assert_eq!(idx.positions, before.positions);
        assert_eq!(idx.cells, before.cells);
    }

    #[test]
    fn index_query_small() {
        let mut idx: GeoIndex<u32> = GeoIndex::new(DEFAULT_CELL_DEG).unwrap();
        assert!(idx.query(&unit_square()).is_empty());
        idx.upsert(1, c(37.98, 23.72), Timestamp(0)).unwrap();
        idx.upsert(2, c(37.99, 23.73), Timestamp(0)).unwrap();
        idx.upsert(3, c(40.64, 22.94), Timestamp(0)).unwrap();
        let area = Geofence::circle(c(37.985, 23.725), 5_000.0).unwrap();
        let got = idx.query(&area);
        assert_eq!(got, HashSet::from([1, 2]));
    }

    #[test]
    fn k_nearest_examples() {
        let res = vec![("b", c(0.0, 2.0)), ("a", c(0.0, 1.0)), ("c", c(0.0, 3.0))];
        let origin = c(0.0, 0.0);
        assert!(k_nearest(&res, origin, 0).is_empty());
        assert_eq!(k_nearest(&res[..1], origin, 5), vec!["b"]);
        assert_eq!(k_nearest(&res, origin, 3), vec!["a", "b", "c"]);
        let ties = vec![("z", c(0.0, 1.0)), ("y", c(1.0, 0.0))];
        assert_eq!(k_nearest(&ties, origin, 2), vec!["y", "z"]);
    }

    fn coord() -> impl Strategy<Value = Coordinate> {
        (-89.0..89.0f64, -179.9..179.9f64).prop_map(|(la, lo)| c(la, lo))
    }

    proptest! {
        #[test]
        fn haversine_metric_properties(a in coord(), b in coord(), m in coord()) {
            let ab = haversine_m(a, b);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, haversine_m(b, a));
            prop_assert_eq!(haversine_m(a, a), 0.0);
            let via = haversine_m(a, m) + haversine_m(m, b);
            prop_assert!(ab <= via * (1.0 + 1e-6) + 1e-6);
        }

        #[test]
        fn circle_monotone_in_radius(center in coord(), p in coord(), r in 1.0..900_000.0f64, extra in 0.0..100_000.0f64) {
            let small = Geofence::circle(center, r).unwrap();
            let big = Geofence::circle(center, r + extra).unwrap();
            if small.contains(p) {
                prop_assert!(big.contains(p));
            }
        }

        #[test]
        fn k_nearest_prefix(points in prop::collection::vec(coord(), 0..30), p in coord(), k in 0usize..35) {
            let res: Vec<(usize, Coordinate)> = points.into_iter().enumerate().collect();
            let short = k_nearest(&res, p, k);
            let long = k_nearest(&res, p, k + 1);
            prop_assert_eq!(short.len(), k.min(res.len()));
            prop_assert_eq!(&long[..short.len()], &short[..]);
        }

        #[test]
        fn index_invariants_hold_after_moves(
            moves in prop::collection::vec((0u8..20, coord()), 1..200),
            cell in prop::sample::select(vec![0.01, 0.05, 0.5, 3.0, 45.0]),
        ) {
            let mut idx = GeoIndex::new(cell).unwrap();
            for (t, (id, p)) in moves.into_iter().enumerate() {
                idx.upsert(id, p, Timestamp(t as i64)).unwrap();
            }
            idx.check_invariants();
        }
    }
}
