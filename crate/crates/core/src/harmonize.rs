//! Mixed-mode integration: diary and app rows cast into one combined schema,
//! plus a per-variable summary of how the two sources differ.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;
use std::str::FromStr;

use chrono::NaiveTime;
use thiserror::Error;

use crate::diary::{
    format_distance, format_hhmm, parse_time, truncate_to_minute, Day, DiaryEntry, DistanceKind,
    TransportMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SourceTag {
    Diary,
    App,
}

impl SourceTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            SourceTag::Diary => "Diary",
            SourceTag::App => "App",
        }
    }

    pub fn other(&self) -> SourceTag {
        match self {
            SourceTag::Diary => SourceTag::App,
            SourceTag::App => SourceTag::Diary,
        }
    }
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            x if x.eq_ignore_ascii_case("diary") => Ok(SourceTag::Diary),
            x if x.eq_ignore_ascii_case("app") => Ok(SourceTag::App),
            other => Err(format!("unknown source {other:?}")),
        }
    }
}

/// Columns of the combined schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Field {
    RespondentId,
    Day,
    Source,
    Label,
    Address,
    TripStart,
    TripEnd,
    TransportMethod,
    DistanceM,
}

impl Field {
    pub const ALL: [Field; 9] = [
        Field::RespondentId,
        Field::Day,
        Field::Source,
        Field::Label,
        Field::Address,
        Field::TripStart,
        Field::TripEnd,
        Field::TransportMethod,
        Field::DistanceM,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Field::RespondentId => "respondent_id",
            Field::Day => "day",
            Field::Source => "mode",
            Field::Label => "label",
            Field::Address => "address",
            Field::TripStart => "trip_start",
            Field::TripEnd => "trip_end",
            Field::TransportMethod => "transport_method",
            Field::DistanceM => "distance_m",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonizedRow {
    pub respondent_id: String,
    pub day: Day,
    pub source: SourceTag,
    pub label: Option<String>,
    pub address: Option<String>,
    pub trip_start: NaiveTime,
    pub trip_end: NaiveTime,
    pub transport_method: TransportMode,
    pub distance_m: f64,
    pub distance_kind: DistanceKind,
}

impl HarmonizedRow {
    pub fn is_missing(&self, field: Field) -> bool {
        match field {
            Field::Label => self.label.is_none(),
            Field::Address => self.address.is_none(),
            _ => false,
        }
    }

    fn sort_key(&self) -> impl Ord + '_ {
        (
            &self.respondent_id,
            self.day,
            self.trip_start,
            self.source,
            self.trip_end,
            self.address.as_deref(),
            self.label.as_deref(),
            self.transport_method,
            self.distance_m as i64,
        )
    }

    pub fn to_entry(&self) -> DiaryEntry {
        DiaryEntry {
            respondent_id: self.respondent_id.clone(),
            day: self.day,
            label: self.label.clone(),
            address: self.address.clone(),
            trip_start: self.trip_start,
            trip_end: self.trip_end,
            transport_method: self.transport_method,
            distance_m: self.distance_m,
            distance_kind: self.distance_kind,
            inferred_distance_m: None,
        }
    }
}

/// Which fields of a row are absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MissingMask(u16);

impl MissingMask {
    pub fn of(row: &HarmonizedRow) -> Self {
        let bits = Field::ALL
            .iter()
            .enumerate()
            .filter(|(_, f)| row.is_missing(**f))
            .fold(0u16, |acc, (i, _)| acc | (1 << i));
        MissingMask(bits)
    }

    pub fn is_missing(&self, field: Field) -> bool {
        let i = Field::ALL.iter().position(|f| *f == field).expect("known field");
        self.0 & (1 << i) != 0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HarmonizedDataset {
    pub rows: Vec<HarmonizedRow>,
    pub missing_mask: Vec<MissingMask>,
}

impl HarmonizedDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows_from(&self, source: SourceTag) -> impl Iterator<Item = &HarmonizedRow> {
        self.rows.iter().filter(move |r| r.source == source)
    }

    /// Diary rows and app rows, tags stripped.
    pub fn split_by_source(&self) -> (Vec<DiaryEntry>, Vec<DiaryEntry>) {
        let diary = self.rows_from(SourceTag::Diary).map(HarmonizedRow::to_entry);
        let app = self.rows_from(SourceTag::App).map(HarmonizedRow::to_entry);
        (diary.collect(), app.collect())
    }

    /// Same rows with every source tag swapped.
    pub fn swap_sources(&self) -> HarmonizedDataset {
        from_rows(
            self.rows
                .iter()
                .map(|r| HarmonizedRow {
                    source: r.source.other(),
                    ..r.clone()
                })
                .collect(),
        )
    }
}

fn from_rows(mut rows: Vec<HarmonizedRow>) -> HarmonizedDataset {
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let missing_mask = rows.iter().map(MissingMask::of).collect();
    HarmonizedDataset { rows, missing_mask }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HarmonizeOptions {
    /// Keep gazetteer labels on app rows instead of blanking them.
    pub keep_app_labels: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarmonizeError {
    #[error("schema violation in {tag} row {row}, field {field}: {reason}")]
    SchemaViolation {
        tag: SourceTag,
        row: usize,
        field: &'static str,
        reason: String,
    },
}

fn validate(entry: &DiaryEntry, source: SourceTag, row: usize) -> Result<(), HarmonizeError> {
    let bad = |field: Field, reason: &str| HarmonizeError::SchemaViolation {
        tag: source,
        row,
        field: field.name(),
        reason: reason.to_string(),
    };
    if entry.respondent_id.trim().is_empty() {
        return Err(bad(Field::RespondentId, "empty"));
    }
    if !entry.distance_m.is_finite() || entry.distance_m < 0.0 {
        return Err(bad(Field::DistanceM, "must be a non-negative number"));
    }
    if entry.trip_end < entry.trip_start {
        return Err(bad(Field::TripEnd, "ends before it starts"));
    }
    Ok(())
}

fn normalize(entry: &DiaryEntry, source: SourceTag, opts: &HarmonizeOptions) -> HarmonizedRow {
    let drop_label = source == SourceTag::App && !opts.keep_app_labels;
    HarmonizedRow {
        respondent_id: entry.respondent_id.clone(),
        day: entry.day,
        source,
        label: if drop_label { None } else { entry.label.clone() },
        address: entry.address.clone(),
        trip_start: truncate_to_minute(entry.trip_start),
        trip_end: truncate_to_minute(entry.trip_end),
        transport_method: entry.transport_method,
        distance_m: entry.distance_m.round(),
        distance_kind: entry.distance_kind,
    }
}

/// Stacks diary and app rows into the combined schema, normalizing times to
/// whole minutes and distances to whole meters.
pub fn harmonize(
    diary_rows: &[DiaryEntry],
    app_rows: &[DiaryEntry],
    opts: &HarmonizeOptions,
) -> Result<HarmonizedDataset, HarmonizeError> {
    let mut rows = Vec::with_capacity(diary_rows.len() + app_rows.len());
    for (source, input) in [(SourceTag::Diary, diary_rows), (SourceTag::App, app_rows)] {
        for (i, entry) in input.iter().enumerate() {
            validate(entry, source, i + 1)?;
            rows.push(normalize(entry, source, opts));
        }
    }
    Ok(from_rows(rows))
}

pub const HARMONIZED_HEADER: [&str; 9] = [
    "respondent_id",
    "day",
    "mode",
    "label",
    "address",
    "trip_start",
    "trip_end",
    "transport_method",
    "distance_m",
];

pub fn write_harmonized<W: io::Write>(writer: W, ds: &HarmonizedDataset) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(HARMONIZED_HEADER)?;
    for r in &ds.rows {
        wtr.write_record([
            r.respondent_id.as_str(),
            &r.day.to_string(),
            r.source.as_str(),
            r.label.as_deref().unwrap_or(""),
            r.address.as_deref().unwrap_or(""),
            &format_hhmm(r.trip_start),
            &format_hhmm(r.trip_end),
            r.transport_method.as_str(),
            &format_distance(r.distance_m),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Error)]
pub enum ReadHarmonizedError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("harmonized row {row}, field {field}: {reason}")]
    Field {
        row: usize,
        field: &'static str,
        reason: String,
    },
}

/// Reads the harmonized output format back. Diary rows are taken as
/// respondent reports and app rows as route-inferred distances.
pub fn read_harmonized<R: io::Read>(reader: R) -> Result<HarmonizedDataset, ReadHarmonizedError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let cols: Vec<Option<usize>> = HARMONIZED_HEADER
        .iter()
        .map(|name| header.iter().position(|h| h == *name))
        .collect();
    if let Some(missing) = cols.iter().position(Option::is_none) {
        return Err(ReadHarmonizedError::Field {
            row: 0,
            field: HARMONIZED_HEADER[missing],
            reason: "missing column".into(),
        });
    }
    let cols: Vec<usize> = cols.into_iter().flatten().collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let get = |k: usize| rec.get(cols[k]).unwrap_or("");
        let opt = |k: usize| Some(get(k)).filter(|s| !s.is_empty() && *s != "-").map(String::from);
        let bad = |k: usize, reason: String| ReadHarmonizedError::Field {
            row,
            field: HARMONIZED_HEADER[k],
            reason,
        };
        let source: SourceTag = get(2).parse().map_err(|e| bad(2, e))?;
        let distance_m = get(8)
            .trim_end_matches('m')
            .parse::<f64>()
            .map_err(|e| bad(8, e.to_string()))?;
        rows.push(HarmonizedRow {
            respondent_id: get(0).to_string(),
            day: get(1).parse().map_err(|e| bad(1, e))?,
            source,
            label: opt(3),
            address: opt(4),
            trip_start: parse_time(get(5)).map_err(|e| bad(5, e))?,
            trip_end: parse_time(get(6)).map_err(|e| bad(6, e))?,
            transport_method: get(7).parse().map_err(|e: crate::diary::UnknownMode| bad(7, e.to_string()))?,
            distance_m,
            distance_kind: match source {
                SourceTag::Diary => DistanceKind::RespondentReported,
                SourceTag::App => DistanceKind::RouteInferred,
            },
        });
    }
    Ok(from_rows(rows))
}

/// Text table in the combined-schema column order, absent fields shown as
/// `-` and distances suffixed with `m`.
pub fn format_table(ds: &HarmonizedDataset) -> String {
    let header = [
        "Day", "Mode", "Where did you go?", "Address", "Trip start", "Trip end",
        "Transp. method", "Distance",
    ];
    let body: Vec<[String; 8]> = ds
        .rows
        .iter()
        .map(|r| {
            [
                r.day.to_string(),
                r.source.to_string(),
                r.label.clone().unwrap_or_else(|| "-".into()),
                r.address.clone().unwrap_or_else(|| "-".into()),
                format_hhmm(r.trip_start),
                format_hhmm(r.trip_end),
                r.transport_method.to_string(),
                format!("{}m", format_distance(r.distance_m)),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(&header.map(String::from));
    out.push('\n');
    for row in &body {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

/// Per-source summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSummary {
    pub trip_count: usize,
    pub respondent_days: usize,
    pub mean_trips_per_respondent_day: f64,
    pub mean_duration_min: f64,
    pub mean_distance_m: f64,
    pub mode_share: BTreeMap<TransportMode, f64>,
}

impl SourceSummary {
    fn of<'a>(rows: impl Iterator<Item = &'a HarmonizedRow>) -> Option<SourceSummary> {
        let rows: Vec<_> = rows.collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let days: BTreeSet<(&str, Day)> = rows
            .iter()
            .map(|r| (r.respondent_id.as_str(), r.day))
            .collect();
        let mut mode_share: BTreeMap<TransportMode, f64> =
            TransportMode::ALL.iter().map(|m| (*m, 0.0)).collect();
        for r in &rows {
            *mode_share.entry(r.transport_method).or_default() += 1.0 / n;
        }
        Some(SourceSummary {
            trip_count: rows.len(),
            respondent_days: days.len(),
            mean_trips_per_respondent_day: n / days.len() as f64,
            mean_duration_min: rows.iter().map(|r| r.to_entry().duration_min()).sum::<f64>() / n,
            mean_distance_m: rows.iter().map(|r| r.distance_m).sum::<f64>() / n,
            mode_share,
        })
    }

    fn variables(&self) -> Vec<(String, f64)> {
        let mut v = vec![
            ("trip_count".to_string(), self.trip_count as f64),
            (
                "trips_per_respondent_day".to_string(),
                self.mean_trips_per_respondent_day,
            ),
            ("mean_duration_min".to_string(), self.mean_duration_min),
            ("mean_distance_m".to_string(), self.mean_distance_m),
        ];
        v.extend(
            self.mode_share
                .iter()
                .map(|(m, s)| (format!("share_{m}"), *s)),
        );
        v
    }
}

/// One compared variable. `difference` is app minus diary; `relative`
/// divides it by the diary value when that is non-zero.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableComparison {
    pub variable: String,
    pub diary: Option<f64>,
    pub app: Option<f64>,
    pub difference: Option<f64>,
    pub relative: Option<f64>,
}

/// Summary of how the two sources differ. A `None` summary marks a source
/// with no rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeEffectReport {
    pub diary: Option<SourceSummary>,
    pub app: Option<SourceSummary>,
    pub variables: Vec<VariableComparison>,
}

impl ModeEffectReport {
    pub fn variable(&self, name: &str) -> Option<&VariableComparison> {
        self.variables.iter().find(|v| v.variable == name)
    }
}

pub fn mode_effect_report(ds: &HarmonizedDataset) -> ModeEffectReport {
    let diary = SourceSummary::of(ds.rows_from(SourceTag::Diary));
    let app = SourceSummary::of(ds.rows_from(SourceTag::App));
    let names: Vec<String> = diary
        .as_ref()
        .or(app.as_ref())
        .map(|s| s.variables().into_iter().map(|(n, _)| n).collect())
        .unwrap_or_default();
    let lookup = |s: &Option<SourceSummary>, name: &str| {
        s.as_ref().and_then(|s| {
            s.variables()
                .into_iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v)
        })
    };
    let variables = names
        .into_iter()
        .map(|name| {
            let d = lookup(&diary, &name);
            let a = lookup(&app, &name);
            let difference = d.zip(a).map(|(d, a)| a - d);
            let relative = difference.zip(d).filter(|(_, d)| *d != 0.0).map(|(x, d)| x / d);
            VariableComparison {
                variable: name,
                diary: d,
                app: a,
                difference,
                relative,
            }
        })
        .collect();
    ModeEffectReport {
        diary,
        app,
        variables,
    }
}

impl fmt::Display for ModeEffectReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |v: Option<f64>, empty: &str| v.map_or(empty.to_string(), |x| format!("{x:.3}"));
        let diary_empty = if self.diary.is_none() { "EMPTY" } else { "-" };
        let app_empty = if self.app.is_none() { "EMPTY" } else { "-" };
        let rows: Vec<[String; 5]> = self
            .variables
            .iter()
            .map(|v| {
                [
                    v.variable.clone(),
                    cell(v.diary, diary_empty),
                    cell(v.app, app_empty),
                    cell(v.difference, "-"),
                    v.relative.map_or("-".into(), |r| format!("{:+.1}%", 100.0 * r)),
                ]
            })
            .collect();
        let header = ["variable", "Diary", "App", "App-Diary", "relative"].map(String::from);
        let mut widths = header.clone().map(|h| h.len());
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        if self.variables.is_empty() {
            return writeln!(f, "no rows in either source");
        }
        for r in std::iter::once(&header).chain(rows.iter()) {
            writeln!(
                f,
                "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}  {:>w4$}",
                r[0],
                r[1],
                r[2],
                r[3],
                r[4],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3],
                w4 = widths[4]
            )?;
        }
        Ok(())
    }
}
