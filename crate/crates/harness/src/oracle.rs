//! The harness's own geometry, used to decide who should have received an
//! alert. Deliberately written without reference to the service's index:
//! a plain scan over every user with a point-in-area test.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }
}

/// Same wire shape as the service's geofences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Area {
    Circle { center: LatLon, radius_m: f64 },
    Polygon { ring: Vec<LatLon> },
}

/// Great-circle distance via the spherical law of haversines.
pub fn distance_m(a: LatLon, b: LatLon) -> f64 {
    let (la1, la2) = (a.lat.to_radians(), b.lat.to_radians());
    let s_lat = ((b.lat - a.lat).to_radians() / 2.0).sin();
    let s_lon = ((b.lon - a.lon).to_radians() / 2.0).sin();
    let h = (s_lat * s_lat + la1.cos() * la2.cos() * s_lon * s_lon).min(1.0);
    2.0 * EARTH_RADIUS_M * h.sqrt().asin()
}

fn on_edge(a: LatLon, b: LatLon, p: LatLon) -> bool {
    let cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
    cross.abs() <= 1e-12
        && p.lon >= a.lon.min(b.lon)
        && p.lon <= a.lon.max(b.lon)
        && p.lat >= a.lat.min(b.lat)
        && p.lat <= a.lat.max(b.lat)
}

/// Winding number in the plane of (lon, lat); points on an edge count as
/// inside.
pub fn ring_contains(ring: &[LatLon], p: LatLon) -> bool {
    let n = ring.len();
    let mut winding = 0i32;
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        if on_edge(a, b, p) {
            return true;
        }
        let side = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
        if a.lat <= p.lat {
            if b.lat > p.lat && side > 0.0 {
                winding += 1;
            }
        } else if b.lat <= p.lat && side < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

impl Area {
    pub fn contains(&self, p: LatLon) -> bool {
        match self {
            Area::Circle { center, radius_m } => distance_m(*center, p) <= *radius_m,
            Area::Polygon { ring } => ring_contains(ring, p),
        }
    }

    /// Distance in degrees from `p` to the polygon outline, or in meters to
    /// the circle's rim. Used to keep generated points clear of boundaries.
    pub fn clearance(&self, p: LatLon) -> f64 {
        match self {
            Area::Circle { center, radius_m } => (distance_m(*center, p) - radius_m).abs(),
            Area::Polygon { ring } => (0..ring.len())
                .map(|i| segment_distance(ring[i], ring[(i + 1) % ring.len()], p))
                .fold(f64::INFINITY, f64::min),
        }
    }
}

fn segment_distance(a: LatLon, b: LatLon, p: LatLon) -> f64 {
    let (dx, dy) = (b.lon - a.lon, b.lat - a.lat);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.lon - a.lon) * dx + (p.lat - a.lat) * dy) / len2).clamp(0.0, 1.0) };
    let (cx, cy) = (a.lon + t * dx, a.lat + t * dy);
    ((p.lon - cx).powi(2) + (p.lat - cy).powi(2)).sqrt()
}

/// Everyone in `positions` whose point lies in `area`.
pub fn in_area<'a, I>(area: &Area, positions: I) -> BTreeSet<String>
where
    I: IntoIterator<Item = (&'a String, LatLon)>,
{
    positions.into_iter().filter(|(_, p)| area.contains(*p)).map(|(id, _)| id.clone()).collect()
}

/// Precision and recall of `got` against `want`. An empty set on both sides
/// scores 1.0 for each.
pub fn precision_recall(got: &BTreeSet<String>, want: &BTreeSet<String>) -> (f64, f64) {
    let hit = got.intersection(want).count() as f64;
    let precision = if got.is_empty() { if want.is_empty() { 1.0 } else { 0.0 } } else { hit / got.len() as f64 };
    let recall = if want.is_empty() { 1.0 } else { hit / want.len() as f64 };
    (precision, recall)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Vec<LatLon> {
        vec![LatLon::new(0.0, 0.0), LatLon::new(0.0, 1.0), LatLon::new(1.0, 1.0), LatLon::new(1.0, 0.0)]
    }

    #[test]
    fn one_degree_of_meridian() {
        let d = distance_m(LatLon::new(0.0, 0.0), LatLon::new(1.0, 0.0));
        assert!((d - 111_194.926_644_558_7).abs() < 1e-6);
    }

    #[test]
    fn square_membership() {
        let r = square();
        assert!(ring_contains(&r, LatLon::new(0.5, 0.5)));
        assert!(ring_contains(&r, LatLon::new(0.0, 0.5)));
        assert!(ring_contains(&r, LatLon::new(1.0, 1.0)));
        assert!(!ring_contains(&r, LatLon::new(1.5, 0.5)));
        assert!(!ring_contains(&r, LatLon::new(0.5, -0.0001)));
    }

    #[test]
    fn concave_notch() {
        // A "U" opening to the north.
        let u = vec![
            LatLon::new(0.0, 0.0),
            LatLon::new(0.0, 3.0),
            LatLon::new(3.0, 3.0),
            LatLon::new(3.0, 2.0),
            LatLon::new(1.0, 2.0),
            LatLon::new(1.0, 1.0),
            LatLon::new(3.0, 1.0),
            LatLon::new(3.0, 0.0),
        ];
        assert!(!ring_contains(&u, LatLon::new(2.0, 1.5)));
        assert!(ring_contains(&u, LatLon::new(2.0, 0.5)));
        assert!(ring_contains(&u, LatLon::new(0.5, 1.5)));
    }

    #[test]
    fn empty_sets_score_perfectly() {
        let e = BTreeSet::new();
        assert_eq!(precision_recall(&e, &e), (1.0, 1.0));
        let one: BTreeSet<String> = ["a".to_string()].into();
        assert_eq!(precision_recall(&e, &one), (0.0, 0.0));
        assert_eq!(precision_recall(&one, &e), (0.0, 1.0));
    }

    #[test]
    fn clearance_of_square() {
        let a = Area::Polygon { ring: square() };
        assert!((a.clearance(LatLon::new(0.5, 0.25)) - 0.25).abs() < 1e-12);
    }
}
