//! Spatiotemporal stop/trip segmentation.
//!
//! A stop is a run of fixes that all stay within `radius_m` of the fix that
//! opened the run (the anchor) for at least `min_duration_s`. The scan moves
//! forward once: from anchor `i` it extends the window until the first fix
//! beyond the radius. A window that lasted long enough becomes a stop and the
//! scan resumes at the excursion fix; otherwise the anchor advances by one.
//! Whatever is not part of a stop is grouped into maximal contiguous trips.

use std::io;
use std::ops::RangeInclusive;

use chrono::{DateTime, FixedOffset, Utc};
use thiserror::Error;

use crate::geo::{haversine_m, mean_location, GeoPoint, LatLon};
use crate::trace::{format_timestamp, seconds_between, split_on_gaps, SubTrace, Trace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopParams {
    pub radius_m: f64,
    pub min_duration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ParamError {
    #[error("stop radius must be positive, got {0}")]
    Radius(f64),
    #[error("minimum stop duration must be positive, got {0}")]
    Duration(f64),
}

impl StopParams {
    pub fn new(radius_m: f64, min_duration_s: f64) -> Result<Self, ParamError> {
        // NaN fails both comparisons and is rejected too.
        if !(radius_m > 0.0) {
            return Err(ParamError::Radius(radius_m));
        }
        if !(min_duration_s > 0.0) {
            return Err(ParamError::Duration(min_duration_s));
        }
        Ok(StopParams {
            radius_m,
            min_duration_s,
        })
    }
}

impl Default for StopParams {
    fn default() -> Self {
        StopParams {
            radius_m: 50.0,
            min_duration_s: 300.0,
        }
    }
}

/// A detected stationary period. Indices are relative to the sub-trace the
/// segmentation was computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct Stop {
    pub first: usize,
    pub last: usize,
    pub centroid: LatLon,
    pub start_t: DateTime<Utc>,
    pub end_t: DateTime<Utc>,
    pub anchor: GeoPoint,
}

impl Stop {
    pub fn range(&self) -> RangeInclusive<usize> {
        self.first..=self.last
    }

    pub fn duration_s(&self) -> f64 {
        seconds_between(self.start_t, self.end_t)
    }
}

/// A maximal run of fixes outside any stop.
#[derive(Debug, Clone, PartialEq)]
pub struct TripSegment {
    pub first: usize,
    pub last: usize,
    pub start_t: DateTime<Utc>,
    pub end_t: DateTime<Utc>,
    pub points: Vec<GeoPoint>,
    /// Ordinal (among the segmentation's stops) of the stop this trip leaves.
    pub origin_stop: Option<usize>,
    /// Ordinal of the stop this trip arrives at.
    pub dest_stop: Option<usize>,
}

impl TripSegment {
    pub fn range(&self) -> RangeInclusive<usize> {
        self.first..=self.last
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    Stop(Stop),
    Trip(TripSegment),
}

/// Ordered stops and trips covering every fix of one sub-trace exactly once.
///
/// Stops and trips alternate except where the fix that ends one stop anchors
/// the next; then two stops are adjacent.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub respondent_id: String,
    /// Index of the sub-trace's first fix within the parent trace.
    pub offset: usize,
    pub segments: Vec<Segment>,
    /// The first trip has no stop before it.
    pub leading_unbounded: bool,
    /// The last trip has no stop after it.
    pub trailing_unbounded: bool,
}

impl Segmentation {
    pub fn stops(&self) -> impl Iterator<Item = &Stop> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Stop(st) => Some(st),
            Segment::Trip(_) => None,
        })
    }

    pub fn trips(&self) -> impl Iterator<Item = &TripSegment> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Trip(t) => Some(t),
            Segment::Stop(_) => None,
        })
    }

    pub fn stop(&self, ordinal: usize) -> Option<&Stop> {
        self.stops().nth(ordinal)
    }

    pub fn point_count(&self) -> usize {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Stop(st) => st.last - st.first + 1,
                Segment::Trip(t) => t.last - t.first + 1,
            })
            .sum()
    }
}

/// Index ranges of the stops found by the forward anchor scan.
pub(crate) fn stop_windows(points: &[GeoPoint], params: &StopParams) -> Vec<(usize, usize)> {
    let n = points.len();
    let mut windows = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && haversine_m(&points[i], &points[j]) <= params.radius_m {
            j += 1;
        }
        if seconds_between(points[i].t, points[j - 1].t) >= params.min_duration_s {
            windows.push((i, j - 1));
            i = j;
        } else {
            i += 1;
        }
    }
    windows
}

/// Splits one sub-trace into stops and trips.
pub fn detect_stops(trace: &SubTrace<'_>, params: &StopParams) -> Segmentation {
    let pts = trace.points;
    let windows = stop_windows(pts, params);
    let mut segments = Vec::with_capacity(2 * windows.len() + 1);
    let mut cursor = 0;
    let push_trip = |segments: &mut Vec<Segment>, first: usize, last: usize, k: usize| {
        segments.push(Segment::Trip(TripSegment {
            first,
            last,
            start_t: pts[first].t,
            end_t: pts[last].t,
            points: pts[first..=last].to_vec(),
            origin_stop: k.checked_sub(1),
            dest_stop: (k < windows.len()).then_some(k),
        }));
    };
    for (k, &(first, last)) in windows.iter().enumerate() {
        if cursor < first {
            push_trip(&mut segments, cursor, first - 1, k);
        }
        let members = &pts[first..=last];
        segments.push(Segment::Stop(Stop {
            first,
            last,
            centroid: mean_location(members).expect("stop has members"),
            start_t: pts[first].t,
            end_t: pts[last].t,
            anchor: pts[first],
        }));
        cursor = last + 1;
    }
    if cursor < pts.len() {
        push_trip(&mut segments, cursor, pts.len() - 1, windows.len());
    }
    let leading_unbounded = matches!(segments.first(), Some(Segment::Trip(_)));
    let trailing_unbounded = matches!(segments.last(), Some(Segment::Trip(_)));
    Segmentation {
        respondent_id: trace.respondent_id.to_string(),
        offset: trace.offset,
        segments,
        leading_unbounded,
        trailing_unbounded,
    }
}

/// Splits at gaps, then segments every piece.
pub fn segment_trace(trace: &Trace, params: &StopParams, max_gap_s: f64) -> Vec<Segmentation> {
    split_on_gaps(trace, max_gap_s)
        .iter()
        .map(|sub| detect_stops(sub, params))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointClass {
    Stop,
    Trip,
}

impl PointClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointClass::Stop => "STOP",
            PointClass::Trip => "TRIP",
        }
    }
}

/// Per-fix classification of a trace: class plus the running stop or trip
/// number for the respondent. Indices are into the full trace.
pub fn classify_points(segmentations: &[Segmentation]) -> Vec<(usize, PointClass, usize)> {
    let mut out = Vec::new();
    let (mut stop_no, mut trip_no) = (0, 0);
    for seg in segmentations {
        for part in &seg.segments {
            let (range, class, no) = match part {
                Segment::Stop(s) => {
                    stop_no += 1;
                    (s.range(), PointClass::Stop, stop_no - 1)
                }
                Segment::Trip(t) => {
                    trip_no += 1;
                    (t.range(), PointClass::Trip, trip_no - 1)
                }
            };
            out.extend(range.map(|i| (seg.offset + i, class, no)));
        }
    }
    out
}

/// Writes the per-fix debug file `respondent_id,timestamp,class,cluster_index`.
pub fn write_point_classes<W: io::Write>(
    writer: W,
    traces: &[(&Trace, &[Segmentation])],
    offset: FixedOffset,
) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["respondent_id", "timestamp", "class", "cluster_index"])?;
    for (trace, segs) in traces {
        for (i, class, no) in classify_points(segs) {
            wtr.write_record([
                trace.respondent_id(),
                &format_timestamp(trace.points()[i].t, offset),
                class.as_str(),
                &no.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}
