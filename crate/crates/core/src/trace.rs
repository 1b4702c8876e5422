//! Per-respondent location traces: ingestion, validation, gap splitting and
//! speed summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::io;

use chrono::{DateTime, FixedOffset, SecondsFormat, Utc};
use thiserror::Error;

use crate::geo::{haversine_m, CoordinateError, GeoPoint};

/// Default split threshold between consecutive fixes.
pub const DEFAULT_MAX_GAP_S: f64 = 300.0;

pub const RAW_LOCATION_HEADER: [&str; 4] = ["respondent_id", "timestamp", "lat", "lon"];

/// One data row of the raw-location format, still as text.
///
/// `row` is the 1-based data row number in the source file (the header is
/// not counted).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRow {
    pub row: usize,
    pub respondent_id: String,
    pub timestamp: String,
    pub lat: String,
    pub lon: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    EmptyTrace,
    Malformed(String),
    CoordinateOutOfRange(CoordinateError),
    NonMonotoneTimestamp,
    DuplicateTimestamp,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::EmptyTrace => write!(f, "EmptyTrace"),
            ViolationKind::Malformed(why) => write!(f, "Malformed: {why}"),
            ViolationKind::CoordinateOutOfRange(e) => write!(f, "CoordinateOutOfRange: {e}"),
            ViolationKind::NonMonotoneTimestamp => write!(f, "NonMonotoneTimestamp"),
            ViolationKind::DuplicateTimestamp => write!(f, "DuplicateTimestamp"),
        }
    }
}

/// A single reason a set of rows does not form a valid [`Trace`].
#[derive(Debug, Clone, PartialEq)]
pub struct TraceViolation {
    /// 1-based data row, or 0 when the violation concerns the whole input.
    pub row: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for TraceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.row == 0 {
            write!(f, "{}", self.kind)
        } else {
            write!(f, "row {}: {}", self.row, self.kind)
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad header: expected {expected}, found {found}")]
    Header { expected: String, found: String },
    #[error("{} validation error(s), first: {}", .0.len(), .0[0])]
    Invalid(Vec<TraceViolation>),
}

/// An ordered, validated sequence of fixes for one respondent.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    respondent_id: String,
    points: Vec<GeoPoint>,
}

impl Trace {
    /// Wraps already-parsed points, checking that timestamps strictly
    /// increase. Empty point lists are rejected.
    pub fn new(
        respondent_id: impl Into<String>,
        points: Vec<GeoPoint>,
    ) -> Result<Self, Vec<TraceViolation>> {
        if points.is_empty() {
            return Err(vec![TraceViolation {
                row: 0,
                kind: ViolationKind::EmptyTrace,
            }]);
        }
        let violations: Vec<_> = points
            .windows(2)
            .enumerate()
            .filter_map(|(i, w)| order_violation(w[0].t, w[1].t).map(|kind| (i + 2, kind)))
            .map(|(row, kind)| TraceViolation { row, kind })
            .collect();
        if !violations.is_empty() {
            return Err(violations);
        }
        Ok(Trace {
            respondent_id: respondent_id.into(),
            points,
        })
    }

    pub fn respondent_id(&self) -> &str {
        &self.respondent_id
    }

    pub fn points(&self) -> &[GeoPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The whole trace as a single sub-trace.
    pub fn as_sub_trace(&self) -> SubTrace<'_> {
        SubTrace {
            respondent_id: &self.respondent_id,
            offset: 0,
            points: &self.points,
        }
    }
}

fn order_violation(prev: DateTime<Utc>, next: DateTime<Utc>) -> Option<ViolationKind> {
    match next.cmp(&prev) {
        std::cmp::Ordering::Greater => None,
        std::cmp::Ordering::Equal => Some(ViolationKind::DuplicateTimestamp),
        std::cmp::Ordering::Less => Some(ViolationKind::NonMonotoneTimestamp),
    }
}

/// A contiguous slice of a [`Trace`] with no internal gap above the split
/// threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubTrace<'a> {
    pub respondent_id: &'a str,
    /// Index of `points[0]` within the parent trace.
    pub offset: usize,
    pub points: &'a [GeoPoint],
}

impl<'a> SubTrace<'a> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub(crate) fn seconds_between(a: DateTime<Utc>, b: DateTime<Utc>) -> f64 {
    (b - a).num_milliseconds() as f64 / 1000.0
}

/// Parses an RFC 3339 timestamp, honors its offset, and normalizes to UTC at
/// millisecond resolution.
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, chrono::ParseError> {
    let t = DateTime::parse_from_rfc3339(s.trim())?.with_timezone(&Utc);
    let ms = t.timestamp_millis();
    Ok(DateTime::from_timestamp_millis(ms).expect("in range after parsing"))
}

/// Validates one respondent's rows into a [`Trace`], or returns every
/// violation found.
pub fn validate_trace(rows: &[RawRow]) -> Result<Trace, Vec<TraceViolation>> {
    let Some(first) = rows.first() else {
        return Err(vec![TraceViolation {
            row: 0,
            kind: ViolationKind::EmptyTrace,
        }]);
    };
    let mut violations = Vec::new();
    let mut points = Vec::with_capacity(rows.len());
    let mut prev: Option<DateTime<Utc>> = None;
    for raw in rows {
        let bad = |kind| TraceViolation { row: raw.row, kind };
        if raw.respondent_id != first.respondent_id {
            violations.push(bad(ViolationKind::Malformed(format!(
                "respondent {} mixed into trace of {}",
                raw.respondent_id, first.respondent_id
            ))));
            continue;
        }
        let t = match parse_timestamp(&raw.timestamp) {
            Ok(t) => t,
            Err(e) => {
                violations.push(bad(ViolationKind::Malformed(format!(
                    "timestamp {:?}: {e}",
                    raw.timestamp
                ))));
                continue;
            }
        };
        let (lat, lon) = match (raw.lat.trim().parse::<f64>(), raw.lon.trim().parse::<f64>()) {
            (Ok(lat), Ok(lon)) if lat.is_finite() && lon.is_finite() => (lat, lon),
            _ => {
                violations.push(bad(ViolationKind::Malformed(format!(
                    "coordinates {:?},{:?}",
                    raw.lat, raw.lon
                ))));
                continue;
            }
        };
        if let Some(p) = prev {
            if let Some(kind) = order_violation(p, t) {
                violations.push(bad(kind));
            }
        }
        prev = Some(prev.map_or(t, |p| p.max(t)));
        match GeoPoint::new(lat, lon, t) {
            Ok(pt) => points.push(pt),
            Err(e) => violations.push(bad(ViolationKind::CoordinateOutOfRange(e))),
        }
    }
    if violations.is_empty() {
        Ok(Trace {
            respondent_id: first.respondent_id.clone(),
            points,
        })
    } else {
        Err(violations)
    }
}

/// Partitions a trace wherever consecutive fixes are more than `max_gap_s`
/// apart.
pub fn split_on_gaps(trace: &Trace, max_gap_s: f64) -> Vec<SubTrace<'_>> {
    assert!(max_gap_s > 0.0, "max_gap_s must be positive");
    let pts = trace.points();
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..pts.len() {
        if seconds_between(pts[i - 1].t, pts[i].t) > max_gap_s {
            out.push(SubTrace {
                respondent_id: trace.respondent_id(),
                offset: start,
                points: &pts[start..i],
            });
            start = i;
        }
    }
    if start < pts.len() {
        out.push(SubTrace {
            respondent_id: trace.respondent_id(),
            offset: start,
            points: &pts[start..],
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SpeedError {
    #[error("at least two points are needed for a speed")]
    TooFewPoints,
    #[error("timestamps must strictly increase")]
    NonIncreasingTime,
}

/// Median of the per-segment speeds (great-circle distance over elapsed
/// time).
pub fn median_speed_mps(points: &[GeoPoint]) -> Result<f64, SpeedError> {
    if points.len() < 2 {
        return Err(SpeedError::TooFewPoints);
    }
    let mut speeds = Vec::with_capacity(points.len() - 1);
    for w in points.windows(2) {
        let dt = seconds_between(w[0].t, w[1].t);
        if dt <= 0.0 {
            return Err(SpeedError::NonIncreasingTime);
        }
        speeds.push(haversine_m(&w[0], &w[1]) / dt);
    }
    speeds.sort_by(f64::total_cmp);
    let mid = speeds.len() / 2;
    Ok(if speeds.len() % 2 == 1 {
        speeds[mid]
    } else {
        (speeds[mid - 1] + speeds[mid]) / 2.0
    })
}

/// Reads the raw-location format. Rows with the wrong number of fields are
/// kept with empty values so validation reports them against their row.
pub fn read_raw_rows<R: io::Read>(reader: R) -> Result<Vec<RawRow>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().all(str::is_empty) {
        return Ok(Vec::new());
    }
    let cols: Vec<Option<usize>> = RAW_LOCATION_HEADER
        .iter()
        .map(|name| header.iter().position(|h| h == *name))
        .collect();
    if cols.iter().any(Option::is_none) {
        return Err(IngestError::Header {
            expected: RAW_LOCATION_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let cols: Vec<usize> = cols.into_iter().flatten().collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| rec.get(cols[c]).unwrap_or("").to_string();
        let complete = rec.len() == header.len();
        rows.push(RawRow {
            row: i + 1,
            respondent_id: field(0),
            timestamp: if complete { field(1) } else { String::new() },
            lat: field(2),
            lon: field(3),
        });
    }
    Ok(rows)
}

/// Groups rows per respondent, keeping file order within each respondent.
pub fn group_by_respondent(rows: Vec<RawRow>) -> BTreeMap<String, Vec<RawRow>> {
    let mut groups: BTreeMap<String, Vec<RawRow>> = BTreeMap::new();
    for row in rows {
        groups.entry(row.respondent_id.clone()).or_default().push(row);
    }
    groups
}

/// Reads and validates every respondent in a raw-location file. Traces come
/// back sorted by respondent id; all violations across respondents are
/// reported together, ordered by row.
pub fn read_traces<R: io::Read>(reader: R) -> Result<Vec<Trace>, IngestError> {
    let rows = read_raw_rows(reader)?;
    if rows.is_empty() {
        return Err(IngestError::Invalid(vec![TraceViolation {
            row: 0,
            kind: ViolationKind::EmptyTrace,
        }]));
    }
    let mut traces = Vec::new();
    let mut violations = Vec::new();
    for (_, group) in group_by_respondent(rows) {
        match validate_trace(&group) {
            Ok(t) => traces.push(t),
            Err(v) => violations.extend(v),
        }
    }
    if violations.is_empty() {
        Ok(traces)
    } else {
        violations.sort_by_key(|v| v.row);
        Err(IngestError::Invalid(violations))
    }
}

/// Writes traces in the raw-location format, rendering timestamps in
/// `offset` with millisecond precision only when needed.
pub fn write_traces<W: io::Write>(
    writer: W,
    traces: &[Trace],
    offset: FixedOffset,
) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(RAW_LOCATION_HEADER)?;
    for trace in traces {
        for p in trace.points() {
            wtr.write_record([
                trace.respondent_id(),
                &format_timestamp(p.t, offset),
                &format!("{:.7}", p.lat()),
                &format!("{:.7}", p.lon()),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn format_timestamp(t: DateTime<Utc>, offset: FixedOffset) -> String {
    let local = t.with_timezone(&offset);
    if t.timestamp_subsec_millis() == 0 {
        local.to_rfc3339_opts(SecondsFormat::Secs, false)
    } else {
        local.to_rfc3339_opts(SecondsFormat::Millis, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: usize, ts: &str, lat: &str, lon: &str) -> RawRow {
        RawRow {
            row: i,
            respondent_id: "r1".into(),
            timestamp: ts.into(),
            lat: lat.into(),
            lon: lon.into(),
        }
    }

    fn pt(secs: i64) -> GeoPoint {
        GeoPoint::new(52.0, 5.0, DateTime::from_timestamp(secs, 0).unwrap()).unwrap()
    }

    #[test]
    fn duplicate_timestamp_is_reported_at_second_row() {
        let rows = [
            row(1, "2024-05-14T08:00:00Z", "52.0", "5.0"),
            row(2, "2024-05-14T08:00:00Z", "52.0", "5.0"),
        ];
        let err = validate_trace(&rows).unwrap_err();
        assert_eq!(
            err,
            vec![TraceViolation {
                row: 2,
                kind: ViolationKind::DuplicateTimestamp
            }]
        );
    }

    #[test]
    fn latitude_91_is_out_of_range() {
        let rows = [row(1, "2024-05-14T08:00:00Z", "91", "5.0")];
        let err = validate_trace(&rows).unwrap_err();
        assert!(matches!(
            err[0].kind,
            ViolationKind::CoordinateOutOfRange(CoordinateError::Latitude(_))
        ));
    }

    #[test]
    fn collects_every_violation() {
        let rows = [
            row(1, "2024-05-14T08:00:10Z", "52.0", "5.0"),
            row(2, "2024-05-14T08:00:00Z", "52.0", "5.0"),
            row(3, "nonsense", "52.0", "5.0"),
            row(4, "2024-05-14T08:01:00Z", "52.0", "500"),
        ];
        let err = validate_trace(&rows).unwrap_err();
        let at: Vec<usize> = err.iter().map(|v| v.row).collect();
        assert_eq!(at, vec![2, 3, 4]);
        assert_eq!(err[0].kind, ViolationKind::NonMonotoneTimestamp);
    }

    #[test]
    fn empty_rows_are_an_empty_trace() {
        let err = validate_trace(&[]).unwrap_err();
        assert_eq!(err[0].kind, ViolationKind::EmptyTrace);
    }

    #[test]
    fn timezone_offsets_are_normalized() {
        let t = parse_timestamp("2024-05-14T08:35:00+01:00").unwrap();
        assert_eq!(t, parse_timestamp("2024-05-14T07:35:00Z").unwrap());
    }

    #[test]
    fn sub_millisecond_digits_are_truncated() {
        let t = parse_timestamp("2024-05-14T08:35:00.123456Z").unwrap();
        assert_eq!(t.timestamp_subsec_micros(), 123_000);
    }

    #[test]
    fn gap_free_trace_is_one_piece() {
        let trace = Trace::new("r", (0..10).map(|i| pt(i * 10)).collect()).unwrap();
        let parts = split_on_gaps(&trace, 1800.0);
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].points, trace.points());
    }

    #[test]
    fn two_hour_gap_splits_once() {
        let mut pts: Vec<_> = (0..5).map(|i| pt(i * 10)).collect();
        pts.extend((0..5).map(|i| pt(7240 + i * 10)));
        let trace = Trace::new("r", pts).unwrap();
        let parts = split_on_gaps(&trace, 1800.0);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].len(), 5);
        assert_eq!(parts[1].offset, 5);
    }

    #[test]
    fn speed_of_a_single_segment() {
        let a = pt(0);
        let b = GeoPoint::at(
            a.location().destination(90.0, 100.0),
            DateTime::from_timestamp(100, 0).unwrap(),
        );
        assert!((median_speed_mps(&[a, b]).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(median_speed_mps(&[a, pt(100)]).unwrap(), 0.0);
        assert_eq!(median_speed_mps(&[a]), Err(SpeedError::TooFewPoints));
    }

    #[test]
    fn reads_interleaved_respondents() {
        let csv = "respondent_id,timestamp,lat,lon\n\
                   b,2024-05-14T08:00:00Z,52.0000000,5.0000000\n\
                   a,2024-05-14T08:00:00Z,52.0000000,5.0000000\n\
                   b,2024-05-14T08:00:10Z,52.0001000,5.0000000\n";
        let traces = read_traces(csv.as_bytes()).unwrap();
        assert_eq!(traces.len(), 2);
        assert_eq!(traces[0].respondent_id(), "a");
        assert_eq!(traces[1].len(), 2);
    }

    #[test]
    fn short_row_is_malformed_at_its_index() {
        let csv = "respondent_id,timestamp,lat,lon\n\
                   a,2024-05-14T08:00:00Z,52.0,5.0\n\
                   a,2024-05-14T08:00:10Z,52.0\n";
        match read_traces(csv.as_bytes()) {
            Err(IngestError::Invalid(v)) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].row, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_byte_file_is_empty_trace() {
        match read_traces("".as_bytes()) {
            Err(IngestError::Invalid(v)) => assert_eq!(v[0].kind, ViolationKind::EmptyTrace),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_only_file_is_empty_trace() {
        match read_traces("respondent_id,timestamp,lat,lon\n".as_bytes()) {
            Err(IngestError::Invalid(v)) => assert_eq!(v[0].kind, ViolationKind::EmptyTrace),
            other => panic!("unexpected {other:?}"),
        }
    }
}
