//! Independent reference for the stop scan and the segmentation invariants.

use tripdiary::geo::{haversine_m, GeoPoint};
use tripdiary::stops::{Segment, Segmentation, StopParams};

/// Exhaustive reference: for each anchor, try every end index and keep the
/// longest window whose members all sit inside the radius.
pub fn brute_force_windows(points: &[GeoPoint], params: &StopParams) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < points.len() {
        let mut best = i;
        for j in i..points.len() {
            if (i..=j).all(|k| haversine_m(&points[i], &points[k]) <= params.radius_m) {
                best = j;
            } else {
                break;
            }
        }
        let secs = (points[best].t - points[i].t).num_milliseconds() as f64 / 1000.0;
        if secs >= params.min_duration_s {
            out.push((i, best));
            i = best + 1;
        } else {
            i += 1;
        }
    }
    out
}

pub fn stop_ranges(seg: &Segmentation) -> Vec<(usize, usize)> {
    seg.stops().map(|s| (s.first, s.last)).collect()
}

/// Partition, radius containment and the duration floor.
pub fn check_invariants(seg: &Segmentation, points: &[GeoPoint], params: &StopParams) -> Result<(), String> {
    let mut covered = vec![0u32; points.len()];
    let mut prev_last: Option<usize> = None;
    for s in &seg.segments {
        let (first, last) = match s {
            Segment::Stop(st) => (st.first, st.last),
            Segment::Trip(tr) => (tr.first, tr.last),
        };
        if first > last || last >= points.len() {
            return Err(format!("bad range {first}..={last}"));
        }
        if let Some(p) = prev_last {
            if first != p + 1 {
                return Err(format!("segment at {first} does not follow {p}"));
            }
        }
        prev_last = Some(last);
        for c in &mut covered[first..=last] {
            *c += 1;
        }
        match s {
            Segment::Stop(st) => {
                if st.duration_s() < params.min_duration_s {
                    return Err(format!("stop {first}..={last} lasts {} s", st.duration_s()));
                }
                if st.anchor != points[first] {
                    return Err(format!("stop {first}..={last} anchor is not its first fix"));
                }
                if let Some(p) = points[first..=last]
                    .iter()
                    .find(|p| haversine_m(&st.anchor, *p) > params.radius_m)
                {
                    return Err(format!("stop {first}..={last} member {} m from anchor", haversine_m(&st.anchor, p)));
                }
            }
            Segment::Trip(tr) => {
                if tr.points.len() != last - first + 1 {
                    return Err(format!("trip {first}..={last} carries {} points", tr.points.len()));
                }
                if tr.points.len() >= 2 && tr.start_t >= tr.end_t {
                    return Err(format!("trip {first}..={last} does not move forward in time"));
                }
            }
        }
    }
    if covered.iter().any(|&c| c != 1) || seg.point_count() != points.len() {
        return Err("not an exact partition".into());
    }
    Ok(())
}
