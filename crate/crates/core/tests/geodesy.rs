use proptest::prelude::*;
use tripdiary::geo::{haversine_m, intermediate, track_length_m, LatLon, EARTH_RADIUS_M};

/// Central angle from unit vectors, atan2(|a x b|, a . b). Well conditioned
/// at every separation, unlike the haversine form.
fn vector_oracle_m(a: LatLon, b: LatLon) -> f64 {
    let v = |p: LatLon| {
        let (phi, lam) = (p.lat().to_radians(), p.lon().to_radians());
        [phi.cos() * lam.cos(), phi.cos() * lam.sin(), phi.sin()]
    };
    let (a, b) = (v(a), v(b));
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let norm = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    EARTH_RADIUS_M * norm.atan2(dot)
}

fn oracle_rows() -> Vec<(LatLon, LatLon, f64)> {
    include_str!("data/geodesy_oracle.csv")
        .lines()
        .skip(1)
        .map(|line| {
            let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
            (LatLon::new(f[0], f[1]).unwrap(), LatLon::new(f[2], f[3]).unwrap(), f[4])
        })
        .collect()
}

#[test]
fn matches_the_high_precision_oracle() {
    let rows = oracle_rows();
    assert_eq!(rows.len(), 100);
    for (a, b, want) in rows {
        let got = haversine_m(a, b);
        let rel = (got - want).abs() / want;
        assert!(rel <= 1e-6, "{a:?} {b:?}: {got} vs {want} (rel {rel:e})");
    }
}

#[test]
fn antipodes_are_half_a_circumference() {
    let want = std::f64::consts::PI * EARTH_RADIUS_M;
    for (lat, lon) in [(0.0, 0.0), (52.09, 5.12), (-33.9, 151.2), (89.0, -179.5)] {
        let a = LatLon::new(lat, lon).unwrap();
        let b = LatLon::new(-lat, if lon > 0.0 { lon - 180.0 } else { lon + 180.0 }).unwrap();
        assert!((haversine_m(a, b) - want).abs() / want < 1e-12);
    }
    assert!((want - 20_015_086.796).abs() < 1e-3);
}

fn coord() -> impl Strategy<Value = LatLon> {
    (-89.9f64..89.9, -180.0f64..180.0).prop_map(|(lat, lon)| LatLon::new(lat, lon).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn agrees_with_the_vector_form(a in coord(), b in coord()) {
        let d = haversine_m(a, b);
        let o = vector_oracle_m(a, b);
        prop_assert!((d - o).abs() <= 1e-6 * o.max(1.0), "{d} vs {o}");
    }

    #[test]
    fn symmetric_and_non_negative(a in coord(), b in coord()) {
        let d = haversine_m(a, b);
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d, haversine_m(b, a));
        prop_assert_eq!(haversine_m(a, a), 0.0);
    }

    #[test]
    fn triangle_inequality(a in coord(), b in coord(), c in coord()) {
        prop_assert!(haversine_m(a, c) <= haversine_m(a, b) + haversine_m(b, c) + 1e-6);
    }

    #[test]
    fn collinear_insertion_keeps_track_length(a in coord(), b in coord(), f in 0.01f64..0.99) {
        // great-circle midpoints are ill-defined near antipodes
        prop_assume!(haversine_m(a, b) < 0.9 * std::f64::consts::PI * EARTH_RADIUS_M);
        let m = intermediate(a, b, f);
        let direct = track_length_m(&[a, b]);
        let split = track_length_m(&[a, m, b]);
        prop_assert!((split - direct).abs() <= 1e-6 * direct.max(1.0), "{split} vs {direct}");
    }

    #[test]
    fn track_length_never_shrinks_when_a_point_is_inserted(
        pts in prop::collection::vec(coord(), 2..8),
        extra in coord(),
        at in 0usize..8,
    ) {
        let before = track_length_m(&pts);
        let mut more = pts.clone();
        more.insert(at.min(pts.len()), extra);
        prop_assert!(track_length_m(&more) >= before - 1e-6);
    }
}
