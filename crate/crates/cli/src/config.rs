//! Run configuration: a TOML file plus `--set key=value` overrides.
//!
//! ```toml
//! seed = 7
//!
//! [stop]
//! radius_m = 50
//! min_duration_s = 300
//!
//! [gazetteer]
//! path = "gazetteer.csv"   # relative to this file
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use chrono::FixedOffset;
use serde::Deserialize;
use toml::{Table, Value};
use tripdiary::diary::TransportMode;
use tripdiary::episode::{ModeThresholds, DEFAULT_MATCH_RADIUS_M};
use tripdiary::multisource::{ModeFilter, Weighting};
use tripdiary::simulate::{DiaryModel, DistanceReport, SensorModel};
use tripdiary::stops::StopParams;
use tripdiary::trace::DEFAULT_MAX_GAP_S;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    seed: u64,
    stop: StopSection,
    trace: TraceSection,
    mode: ModeSection,
    gazetteer: GazetteerSection,
    router: RouterSection,
    time: TimeSection,
    diary: DiarySection,
    harmonize: HarmonizeSection,
    estimate: EstimateSection,
    sensor: SensorSection,
    diary_model: DiaryModelSection,
}

impl Default for RawConfig {
    fn default() -> Self {
        RawConfig {
            seed: 0,
            stop: StopSection::default(),
            trace: TraceSection::default(),
            mode: ModeSection::default(),
            gazetteer: GazetteerSection::default(),
            router: RouterSection::default(),
            time: TimeSection::default(),
            diary: DiarySection::default(),
            harmonize: HarmonizeSection::default(),
            estimate: EstimateSection::default(),
            sensor: SensorSection::default(),
            diary_model: DiaryModelSection::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct StopSection {
    radius_m: f64,
    min_duration_s: f64,
}

impl Default for StopSection {
    fn default() -> Self {
        let p = StopParams::default();
        StopSection {
            radius_m: p.radius_m,
            min_duration_s: p.min_duration_s,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TraceSection {
    max_gap_s: f64,
}

impl Default for TraceSection {
    fn default() -> Self {
        TraceSection {
            max_gap_s: DEFAULT_MAX_GAP_S,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ModeSection {
    breakpoints: Vec<f64>,
    labels: Vec<String>,
}

impl Default for ModeSection {
    fn default() -> Self {
        ModeSection {
            breakpoints: vec![2.0, 6.0, 35.0],
            labels: ["Walk", "Bike", "Car", "Train"].map(String::from).to_vec(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GazetteerSection {
    path: Option<PathBuf>,
    match_radius_m: f64,
}

impl Default for GazetteerSection {
    fn default() -> Self {
        GazetteerSection {
            path: None,
            match_radius_m: DEFAULT_MATCH_RADIUS_M,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RouterSection {
    url: Option<String>,
    fallback: bool,
}

impl Default for RouterSection {
    fn default() -> Self {
        RouterSection {
            url: None,
            fallback: true,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TimeSection {
    tz_offset: String,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection {
            tz_offset: "+00:00".into(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct DiarySection {
    distance: String,
}

impl Default for DiarySection {
    fn default() -> Self {
        DiarySection {
            distance: "track".into(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct HarmonizeSection {
    keep_app_labels: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EstimateSection {
    weighting: String,
    weights: Vec<f64>,
    mode: String,
}

impl Default for EstimateSection {
    fn default() -> Self {
        EstimateSection {
            weighting: "auto".into(),
            weights: Vec::new(),
            mode: "all".into(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SensorSection {
    interval_s: f64,
    sigma_m: f64,
    dropout: f64,
}

impl Default for SensorSection {
    fn default() -> Self {
        let m = SensorModel::default();
        SensorSection {
            interval_s: m.sampling_interval_s,
            sigma_m: m.gps_noise_sigma_m,
            dropout: m.dropout,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct DiaryModelSection {
    rounding_min: u32,
    omission_p0: f64,
    omission_lambda_m: f64,
    distance: String,
}

impl Default for DiaryModelSection {
    fn default() -> Self {
        let m = DiaryModel::default();
        DiaryModelSection {
            rounding_min: m.time_rounding_min,
            omission_p0: m.omission_p0,
            omission_lambda_m: m.omission_lambda_m,
            distance: "straight_line".into(),
        }
    }
}

/// Which distance `process` writes into `distance_m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiaryDistance {
    Track,
    Route,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub stop: StopParams,
    pub max_gap_s: f64,
    pub modes: ModeThresholds,
    pub gazetteer_path: Option<PathBuf>,
    pub match_radius_m: f64,
    pub router_url: Option<String>,
    pub router_fallback: bool,
    pub tz: FixedOffset,
    pub diary_distance: DiaryDistance,
    pub keep_app_labels: bool,
    pub weighting: Weighting,
    pub mode_filter: ModeFilter,
    pub sensor: SensorModel,
    pub diary_model: DiaryModel,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_table(Table::new()).expect("defaults are valid")
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Parses the right-hand side of `--set`: a TOML value when it is one,
/// otherwise a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').map(str::trim).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(format!("bad key {key:?}")));
    }
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("{key}: {p} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Reads `path` (if any), then applies `KEY=VALUE` overrides in order.
    /// Relative paths inside the file resolve against its directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
        let mut table = match path {
            None => Table::new(),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                let mut t: Table = text
                    .parse()
                    .map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                let base = p.parent().unwrap_or(Path::new(""));
                if let Some(Value::String(g)) = t
                    .get_mut("gazetteer")
                    .and_then(Value::as_table_mut)
                    .and_then(|g| g.get_mut("path"))
                {
                    if !g.is_empty() {
                        *g = base.join(&*g).to_string_lossy().into_owned();
                    }
                }
                t
            }
        };
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| config_err(format!("--set expects KEY=VALUE, got {o:?}")))?;
            set_dotted(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        RunConfig::from_table(table)
    }

    fn from_table(table: Table) -> Result<RunConfig, CliError> {
        let raw: RawConfig = table.try_into().map_err(|e: toml::de::Error| config_err(e.message()))?;
        let stop = StopParams::new(raw.stop.radius_m, raw.stop.min_duration_s)
            .map_err(|e| config_err(format!("stop: {e}")))?;
        if !(raw.trace.max_gap_s > 0.0) {
            return Err(config_err("trace.max_gap_s must be positive"));
        }
        let labels = raw
            .mode
            .labels
            .iter()
            .map(|l| l.parse::<TransportMode>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| config_err(format!("mode.labels: {e}")))?;
        let modes = ModeThresholds::new(&raw.mode.breakpoints, &labels)
            .map_err(|e| config_err(format!("mode: {e}")))?;
        let gazetteer_path = raw.gazetteer.path.filter(|p| !p.as_os_str().is_empty());
        if let Some(p) = &gazetteer_path {
            if !p.is_file() {
                return Err(config_err(format!("gazetteer.path {} does not exist", p.display())));
            }
        }
        if !(raw.gazetteer.match_radius_m >= 0.0) {
            return Err(config_err("gazetteer.match_radius_m must be >= 0"));
        }
        let tz = raw
            .time
            .tz_offset
            .parse::<FixedOffset>()
            .map_err(|_| config_err(format!("time.tz_offset {:?} is not like +01:00", raw.time.tz_offset)))?;
        let diary_distance = match raw.diary.distance.as_str() {
            "track" => DiaryDistance::Track,
            "route" => DiaryDistance::Route,
            other => return Err(config_err(format!("diary.distance {other:?} is not track or route"))),
        };
        let weighting = match raw.estimate.weighting.as_str() {
            "auto" => Weighting::Auto,
            "inverse_variance" => Weighting::InverseVariance,
            "by_n" => Weighting::ByN,
            "explicit" if !raw.estimate.weights.is_empty() => Weighting::Explicit(raw.estimate.weights.clone()),
            "explicit" => return Err(config_err("estimate.weighting = explicit needs estimate.weights")),
            other => return Err(config_err(format!("estimate.weighting {other:?} is unknown"))),
        };
        let mode_filter = if raw.estimate.mode.eq_ignore_ascii_case("all") {
            ModeFilter::All
        } else {
            ModeFilter::Only(
                raw.estimate
                    .mode
                    .parse()
                    .map_err(|e| config_err(format!("estimate.mode: {e}")))?,
            )
        };
        let sensor = SensorModel::new(raw.sensor.interval_s, raw.sensor.sigma_m, raw.sensor.dropout)
            .map_err(|e| config_err(format!("sensor: {e}")))?;
        let report = match raw.diary_model.distance.as_str() {
            "straight_line" => DistanceReport::StraightLine,
            "truth_rounded" => DistanceReport::TruthRounded,
            other => {
                return Err(config_err(format!(
                    "diary_model.distance {other:?} is not straight_line or truth_rounded"
                )))
            }
        };
        let diary_model = DiaryModel::new(
            raw.diary_model.rounding_min,
            raw.diary_model.omission_p0,
            raw.diary_model.omission_lambda_m,
            report,
        )
        .map_err(|e| config_err(format!("diary_model: {e}")))?;
        Ok(RunConfig {
            seed: raw.seed,
            stop,
            max_gap_s: raw.trace.max_gap_s,
            modes,
            gazetteer_path,
            match_radius_m: raw.gazetteer.match_radius_m,
            router_url: raw.router.url.filter(|u| !u.is_empty()),
            router_fallback: raw.router.fallback,
            tz,
            diary_distance,
            keep_app_labels: raw.harmonize.keep_app_labels,
            weighting,
            mode_filter,
            sensor,
            diary_model,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.stop, StopParams::default());
        assert_eq!(c.max_gap_s, 300.0);
        assert_eq!(c.diary_distance, DiaryDistance::Track);
        assert_eq!(c.weighting, Weighting::Auto);
        assert!(c.router_url.is_none());
    }

    #[test]
    fn overrides_win_and_parse_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        fs::write(&p, "seed = 3\n[stop]\nradius_m = 80\n").unwrap();
        let c = RunConfig::load(
            Some(&p),
            &[
                "stop.radius_m=25".into(),
                "time.tz_offset=+02:00".into(),
                "estimate.mode = Walk".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.stop.radius_m, 25.0);
        assert_eq!(c.tz, FixedOffset::east_opt(7200).unwrap());
        assert_eq!(c.mode_filter, ModeFilter::Only(TransportMode::Walk));
    }

    #[test]
    fn bad_configs_are_config_errors() {
        for o in [
            "stop.radius_m=-1",
            "stop.nope=1",
            "diary.distance=crow",
            "gazetteer.path=/does/not/exist.csv",
            "noequals",
            "estimate.weighting=explicit",
        ] {
            let e = RunConfig::load(None, &[o.to_string()]).unwrap_err();
            assert!(matches!(e, CliError::Config(_)), "{o}: {e}");
        }
    }

    #[test]
    fn gazetteer_path_is_relative_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("g.csv"), "lat,lon,address,label\n").unwrap();
        let p = dir.path().join("run.toml");
        fs::write(&p, "[gazetteer]\npath = \"g.csv\"\n").unwrap();
        let c = RunConfig::load(Some(&p), &[]).unwrap();
        assert_eq!(c.gazetteer_path.unwrap(), dir.path().join("g.csv"));
    }
}
