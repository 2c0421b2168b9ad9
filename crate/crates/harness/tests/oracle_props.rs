use std::collections::BTreeSet;

use proptest::prelude::*;

use e112_core::geo::{haversine_m, Coordinate, Geofence};
use e112_harness::oracle::{distance_m, precision_recall, Area, LatLon};

fn point() -> impl Strategy<Value = LatLon> {
    (-80.0..80.0f64, -179.0..179.0f64).prop_map(|(lat, lon)| LatLon::new(lat, lon))
}

fn polygon() -> impl Strategy<Value = Area> {
    (point(), 0.001..2.0f64, prop::collection::vec((0.0..0.4f64, 0.25..1.0f64), 3..12)).prop_map(|(c, reach, spokes)| {
        let n = spokes.len() as f64;
        let ring = spokes
            .iter()
            .enumerate()
            .map(|(i, (jitter, r))| {
                let a = std::f64::consts::TAU * (i as f64 + jitter) / n;
                LatLon::new((c.lat + reach * r * a.sin()).clamp(-89.0, 89.0), (c.lon + reach * r * a.cos()).clamp(-180.0, 180.0))
            })
            .collect();
        Area::Polygon { ring }
    })
}

fn to_core(area: &Area) -> Geofence {
    serde_json::from_value(serde_json::to_value(area).unwrap()).unwrap()
}

proptest! {
    #[test]
    fn distances_agree_with_the_service(a in point(), b in point()) {
        let ours = distance_m(a, b);
        let theirs = haversine_m(Coordinate::new(a.lat, a.lon).unwrap(), Coordinate::new(b.lat, b.lon).unwrap());
        prop_assert!((ours - theirs).abs() <= 1e-6 * ours.max(1.0));
    }

    #[test]
    fn polygon_membership_agrees_away_from_edges(area in polygon(), dx in -1.0..1.0f64, dy in -1.0..1.0f64) {
        let Area::Polygon { ring } = &area else { unreachable!() };
        let c = ring[0];
        let p = LatLon::new((c.lat + dy).clamp(-89.0, 89.0), (c.lon + dx).clamp(-180.0, 180.0));
        prop_assume!(area.clearance(p) > 1e-9);
        prop_assert_eq!(area.contains(p), to_core(&area).contains(Coordinate::new(p.lat, p.lon).unwrap()));
    }

    #[test]
    fn polygon_vertices_are_inside_for_both(area in polygon()) {
        let Area::Polygon { ring } = &area else { unreachable!() };
        let core = to_core(&area);
        for v in ring {
            prop_assert!(area.contains(*v));
            prop_assert!(core.contains(Coordinate::new(v.lat, v.lon).unwrap()));
        }
    }

    #[test]
    fn precision_and_recall_stay_in_range(got in prop::collection::btree_set("[a-e]", 0..5), want in prop::collection::btree_set("[a-e]", 0..5)) {
        let (p, r) = precision_recall(&got, &want);
        prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&r));
        let same: BTreeSet<String> = want.clone();
        prop_assert_eq!(precision_recall(&same, &want), (1.0, 1.0));
    }
}
