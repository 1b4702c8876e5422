//! Turns stop/trip segmentations into diary rows: destination address by
//! reverse geocoding, primary mode from speed, and both a track-measured and
//! a route-inferred distance per trip.

mod gazetteer;
mod mode;
mod router;

pub use gazetteer::{reverse_geocode, Gazetteer, GazetteerEntry, GazetteerError, DEFAULT_MATCH_RADIUS_M};
pub use mode::{infer_mode, ModeClassifier, ModeThresholds, ThresholdError};
pub use router::{
    inferred_distance_m, CachingRouter, FallbackRouter, GreatCircleRouter, RemoteRouter, Router,
    RouterError,
};

use chrono::FixedOffset;

use crate::diary::{Day, DiaryEntry, DistanceKind};
use crate::geo::{track_length_m, LatLon};
use crate::stops::{Segmentation, TripSegment};

/// Endpoints and path of a trip, bridged to the centroids of the stops it
/// connects. Trips without a bounding stop start or end at their own first
/// or last fix.
pub fn trip_path(seg: &Segmentation, trip: &TripSegment) -> (LatLon, LatLon, Vec<LatLon>) {
    let origin = trip.origin_stop.and_then(|k| seg.stop(k)).map(|s| s.centroid);
    let dest = trip.dest_stop.and_then(|k| seg.stop(k)).map(|s| s.centroid);
    let mut path = Vec::with_capacity(trip.points.len() + 2);
    path.extend(origin);
    path.extend(trip.points.iter().map(|p| p.location()));
    path.extend(dest);
    let first = path[0];
    let last = path[path.len() - 1];
    (first, last, path)
}

/// One diary row per trip segment, in input order.
///
/// `distance_m` is the track length from the origin stop's centroid through
/// every trip fix to the destination stop's centroid. The router's distance
/// between the same endpoints is kept in `inferred_distance_m`.
pub fn build_diary(
    segmentations: &[Segmentation],
    gazetteer: &Gazetteer,
    classifier: &dyn ModeClassifier,
    router: &dyn Router,
    tz: FixedOffset,
) -> Result<Vec<DiaryEntry>, RouterError> {
    let mut out = Vec::new();
    for seg in segmentations {
        for trip in seg.trips() {
            let (origin, dest, path) = trip_path(seg, trip);
            let mode = classifier.classify(trip);
            let inferred = inferred_distance_m(origin, dest, mode, router)?;
            let place = trip
                .dest_stop
                .and_then(|k| seg.stop(k))
                .and_then(|s| reverse_geocode(s.centroid, gazetteer));
            let start = trip.start_t.with_timezone(&tz);
            let end = trip.end_t.with_timezone(&tz);
            out.push(DiaryEntry {
                respondent_id: seg.respondent_id.clone(),
                day: Day::Date(start.date_naive()),
                label: place.and_then(|p| p.label.clone()),
                address: place.map(|p| p.address.clone()),
                trip_start: start.time(),
                trip_end: end.time(),
                transport_method: mode,
                distance_m: track_length_m(&path),
                distance_kind: DistanceKind::TrackMeasured,
                inferred_distance_m: Some(inferred),
            });
        }
    }
    Ok(out)
}
