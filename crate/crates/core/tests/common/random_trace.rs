//! Seeded random traces mixing dwells and moves.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tripdiary::geo::{GeoPoint, LatLon};
use tripdiary::trace::Trace;

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 3, 12, 7, 0, 0).unwrap()
}

/// Up to `max_points` fixes. Dwells jitter within about 40 m of a centre
/// and last from seconds to several minutes; moves head off at 1 to 20 m/s.
pub fn random_trace(seed: u64, max_points: usize) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = rng.gen_range(1..=max_points);
    let mut here = LatLon::new(52.0 + rng.gen_range(-1.0..1.0), 5.0 + rng.gen_range(-1.0..1.0)).unwrap();
    let mut t = t0();
    let mut points = Vec::with_capacity(target);
    while points.len() < target {
        let n = rng.gen_range(1..=40).min(target - points.len());
        let dt = rng.gen_range(5..=30);
        if rng.gen_bool(0.5) {
            let spread = rng.gen_range(0.0..40.0);
            for _ in 0..n {
                let p = here.offset_m(rng.gen_range(-spread..=spread), rng.gen_range(-spread..=spread));
                points.push(GeoPoint::at(p, t));
                t += Duration::seconds(dt);
            }
        } else {
            let speed = rng.gen_range(1.0..20.0);
            let bearing = rng.gen_range(0.0..360.0);
            for _ in 0..n {
                here = here.destination(bearing, speed * dt as f64);
                points.push(GeoPoint::at(here, t));
                t += Duration::seconds(dt);
            }
        }
        if rng.gen_bool(0.05) {
            t += Duration::seconds(rng.gen_range(300..3600));
        }
    }
    Trace::new(format!("P{seed}"), points).unwrap()
}
