//! Diary rows shared by the app pipeline, the traditional diary, and the
//! simulator, with their delimited-text formats.

use std::fmt;
use std::io;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveTime, Timelike};
use thiserror::Error;

/// Primary transport method of a trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TransportMode {
    Walk,
    Bike,
    Car,
    Train,
    Unknown,
}

impl TransportMode {
    pub const ALL: [TransportMode; 5] = [
        TransportMode::Walk,
        TransportMode::Bike,
        TransportMode::Car,
        TransportMode::Train,
        TransportMode::Unknown,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TransportMode::Walk => "Walk",
            TransportMode::Bike => "Bike",
            TransportMode::Car => "Car",
            TransportMode::Train => "Train",
            TransportMode::Unknown => "Unknown",
        }
    }
}

impl fmt::Display for TransportMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown transport method {0:?}")]
pub struct UnknownMode(pub String);

impl FromStr for TransportMode {
    type Err = UnknownMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TransportMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownMode(s.to_string()))
    }
}

/// How a row's distance was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DistanceKind {
    TrackMeasured,
    RouteInferred,
    RespondentReported,
}

impl DistanceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DistanceKind::TrackMeasured => "TrackMeasured",
            DistanceKind::RouteInferred => "RouteInferred",
            DistanceKind::RespondentReported => "RespondentReported",
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DistanceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            DistanceKind::TrackMeasured,
            DistanceKind::RouteInferred,
            DistanceKind::RespondentReported,
        ]
        .into_iter()
        .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
        .ok_or_else(|| format!("unknown distance kind {s:?}"))
    }
}

/// Diary day: either a study-day number or a calendar date. Sorts numbers
/// before dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Day {
    Index(u32),
    Date(NaiveDate),
}

impl fmt::Display for Day {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Day::Index(n) => write!(f, "{n}"),
            Day::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
        }
    }
}

impl FromStr for Day {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Ok(n) = s.parse::<u32>() {
            return Ok(Day::Index(n));
        }
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map(Day::Date)
            .map_err(|_| format!("day {s:?} is neither a number nor YYYY-MM-DD"))
    }
}

/// One trip in diary form.
///
/// Times and distance keep full resolution; the file writers truncate times
/// to the minute and round distances to whole meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DiaryEntry {
    pub respondent_id: String,
    pub day: Day,
    pub label: Option<String>,
    pub address: Option<String>,
    pub trip_start: NaiveTime,
    pub trip_end: NaiveTime,
    pub transport_method: TransportMode,
    pub distance_m: f64,
    pub distance_kind: DistanceKind,
    /// Route-inferred distance between the trip's endpoints, kept alongside
    /// a track-measured distance for calibration.
    pub inferred_distance_m: Option<f64>,
}

impl DiaryEntry {
    /// The same trip reporting its route-inferred distance instead of the
    /// track. Entries without one are returned unchanged.
    pub fn with_route_distance(&self) -> DiaryEntry {
        match self.inferred_distance_m {
            Some(d) => DiaryEntry {
                distance_m: d,
                distance_kind: DistanceKind::RouteInferred,
                ..self.clone()
            },
            None => self.clone(),
        }
    }

    pub fn duration_min(&self) -> f64 {
        (self.trip_end - self.trip_start).num_milliseconds() as f64 / 60_000.0
    }
}

/// Truncates to whole minutes.
pub fn truncate_to_minute(t: NaiveTime) -> NaiveTime {
    NaiveTime::from_hms_opt(t.hour(), t.minute(), 0).expect("valid")
}

pub fn format_hhmm(t: NaiveTime) -> String {
    t.format("%H:%M").to_string()
}

pub fn parse_time(s: &str) -> Result<NaiveTime, String> {
    let s = s.trim();
    NaiveTime::parse_from_str(s, "%H:%M")
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M:%S"))
        .map_err(|_| format!("time {s:?} is not HH:MM"))
}

pub fn format_distance(d: f64) -> String {
    format!("{}", d.round() as i64)
}

#[derive(Debug, Error)]
pub enum DiaryError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("schema violation at row {row}, field {field}: {reason}")]
    Schema {
        row: usize,
        field: &'static str,
        reason: String,
    },
}

pub const DIARY_HEADER: [&str; 9] = [
    "respondent_id",
    "day",
    "label",
    "address",
    "trip_start",
    "trip_end",
    "transport_method",
    "distance_m",
    "distance_kind",
];

/// Writes the diary output format.
pub fn write_diary<W: io::Write>(writer: W, entries: &[DiaryEntry]) -> Result<(), DiaryError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(DIARY_HEADER)?;
    for e in entries {
        wtr.write_record([
            e.respondent_id.as_str(),
            &e.day.to_string(),
            e.label.as_deref().unwrap_or(""),
            e.address.as_deref().unwrap_or(""),
            &format_hhmm(e.trip_start),
            &format_hhmm(e.trip_end),
            e.transport_method.as_str(),
            &format_distance(e.distance_m),
            e.distance_kind.as_str(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads either diary layout. The `address` and `distance_kind` columns may
/// be missing; without `distance_kind` rows are respondent reports. Values
/// are kept verbatim (no truncation or rounding).
pub fn read_diary<R: io::Read>(reader: R) -> Result<Vec<DiaryEntry>, DiaryError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let required = [
        "respondent_id",
        "day",
        "label",
        "trip_start",
        "trip_end",
        "transport_method",
        "distance_m",
    ];
    for name in required {
        if col(name).is_none() {
            return Err(DiaryError::Schema {
                row: 0,
                field: static_field(name),
                reason: "missing column".into(),
            });
        }
    }
    let idx = |name: &str| col(name).expect("checked above");
    let (c_id, c_day, c_label, c_start, c_end, c_mode, c_dist) = (
        idx("respondent_id"),
        idx("day"),
        idx("label"),
        idx("trip_start"),
        idx("trip_end"),
        idx("transport_method"),
        idx("distance_m"),
    );
    let c_addr = col("address");
    let c_kind = col("distance_kind");

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let get = |c: usize| rec.get(c).unwrap_or("");
        let opt = |c: Option<usize>| {
            c.map(get)
                .filter(|s| !s.is_empty() && *s != "-")
                .map(str::to_string)
        };
        let bad = |field: &'static str, reason: String| DiaryError::Schema { row, field, reason };
        let respondent_id = get(c_id).to_string();
        if respondent_id.is_empty() {
            return Err(bad("respondent_id", "empty".into()));
        }
        let day = get(c_day).parse::<Day>().map_err(|e| bad("day", e))?;
        let trip_start = parse_time(get(c_start)).map_err(|e| bad("trip_start", e))?;
        let trip_end = parse_time(get(c_end)).map_err(|e| bad("trip_end", e))?;
        let transport_method = get(c_mode)
            .parse::<TransportMode>()
            .map_err(|e| bad("transport_method", e.to_string()))?;
        let distance_m = parse_distance(get(c_dist)).map_err(|e| bad("distance_m", e))?;
        let distance_kind = match c_kind.map(get).filter(|s| !s.is_empty()) {
            Some(s) => s.parse().map_err(|e| bad("distance_kind", e))?,
            None => DistanceKind::RespondentReported,
        };
        out.push(DiaryEntry {
            respondent_id,
            day,
            label: opt(Some(c_label)),
            address: opt(c_addr),
            trip_start,
            trip_end,
            transport_method,
            distance_m,
            distance_kind,
            inferred_distance_m: None,
        });
    }
    Ok(out)
}

/// Accepts plain meters, tolerating a trailing `m` as printed in reports.
fn parse_distance(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let num = s.strip_suffix('m').unwrap_or(s);
    match num.trim().parse::<f64>() {
        Ok(d) if d.is_finite() && d >= 0.0 => Ok(d),
        _ => Err(format!("distance {s:?} is not a non-negative number")),
    }
}

fn static_field(name: &str) -> &'static str {
    DIARY_HEADER
        .iter()
        .find(|h| **h == name)
        .copied()
        .unwrap_or("unknown")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_parse_case_insensitively() {
        assert_eq!("walk".parse::<TransportMode>().unwrap(), TransportMode::Walk);
        assert!("Bus".parse::<TransportMode>().is_err());
    }

    #[test]
    fn days_order_numbers_first() {
        let d: Day = "2024-05-14".parse().unwrap();
        let n: Day = "2".parse().unwrap();
        assert!(n < d);
        assert_eq!(d.to_string(), "2024-05-14");
    }

    #[test]
    fn reads_traditional_diary_without_address_column() {
        let csv = "respondent_id,day,label,trip_start,trip_end,transport_method,distance_m\n\
                   R1,1,Home,08:50,09:00,Walk,210\n";
        let rows = read_diary(csv.as_bytes()).unwrap();
        assert_eq!(rows[0].address, None);
        assert_eq!(rows[0].label.as_deref(), Some("Home"));
        assert_eq!(rows[0].distance_kind, DistanceKind::RespondentReported);
        assert_eq!(rows[0].duration_min(), 10.0);
    }

    #[test]
    fn bad_field_names_row_and_field() {
        let csv = "respondent_id,day,label,address,trip_start,trip_end,transport_method,distance_m\n\
                   R1,1,,x,08:50,09:00,Walk,210\n\
                   R1,1,,x,08:50,09:00,Hovercraft,210\n";
        match read_diary(csv.as_bytes()) {
            Err(DiaryError::Schema { row, field, .. }) => {
                assert_eq!((row, field), (2, "transport_method"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn writer_truncates_and_rounds() {
        let e = DiaryEntry {
            respondent_id: "R1".into(),
            day: Day::Index(2),
            label: None,
            address: Some("203 Main St.".into()),
            trip_start: NaiveTime::from_hms_opt(8, 35, 59).unwrap(),
            trip_end: NaiveTime::from_hms_opt(8, 43, 20).unwrap(),
            transport_method: TransportMode::Walk,
            distance_m: 429.6,
            distance_kind: DistanceKind::TrackMeasured,
            inferred_distance_m: Some(210.2),
        };
        let mut buf = Vec::new();
        write_diary(&mut buf, &[e.clone(), e.with_route_distance()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(
            lines[1],
            "R1,2,,203 Main St.,08:35,08:43,Walk,430,TrackMeasured"
        );
        assert_eq!(
            lines[2],
            "R1,2,,203 Main St.,08:35,08:43,Walk,210,RouteInferred"
        );
    }
}
