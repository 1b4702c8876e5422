//! The `tripdiary` command line.

pub mod config;

use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};

use chrono::FixedOffset;
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use tripdiary::diary::{read_diary, write_diary, DiaryEntry, DiaryError};
use tripdiary::episode::{
    build_diary, CachingRouter, FallbackRouter, Gazetteer, GazetteerEntry, GreatCircleRouter,
    RemoteRouter, Router, RouterError,
};
use tripdiary::harmonize::{
    format_table, harmonize, mode_effect_report, read_harmonized, write_harmonized,
    HarmonizeOptions, HarmonizedDataset, SourceTag,
};
use tripdiary::multisource::{
    apply_calibration, calibration_ratio, estimate_mean_distance, macro_integrate, read_pairs,
    write_estimates, write_pairs, EstimateError, EstimateRow,
};
use tripdiary::simulate::{
    builtin_scenario, diary_observe, evaluate_recovery, generate_truth, sensor_observe,
    write_truth, Scenario, BUILTIN_SCENARIOS,
};
use tripdiary::stops::{segment_trace, write_point_classes, Segmentation};
use tripdiary::trace::{read_traces, write_traces, IngestError, Trace};

use config::{DiaryDistance, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("config: {0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Config(_) => 3,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        io_err(path, e)
    } else {
        CliError::Validation(format!("{}: {e}", path.display()))
    }
}

#[derive(Debug, Parser)]
#[command(name = "tripdiary", version, about = "Travel diaries from location streams")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. --set stop.radius_m=80. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Raw locations to diary rows (diary.csv, pairs.csv).
    Process {
        trace: PathBuf,
        /// Also write the per-fix classification to points.csv.
        #[arg(long)]
        points: bool,
    },
    /// Stack a diary file and an app diary file (harmonized.csv, report.txt).
    Harmonize { diary: PathBuf, app: PathBuf },
    /// Per-source estimates, calibrated and combined when pairs are given
    /// (estimates.csv).
    Estimate {
        /// Harmonized file holding both sources.
        harmonized: Option<PathBuf>,
        #[arg(long)]
        diary: Option<PathBuf>,
        #[arg(long)]
        app: Option<PathBuf>,
        /// `actual_m,inferred_m` distance pairs.
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Truth, sensor, diary and app files from a scenario file or a
    /// built-in scenario name.
    Simulate { scenario: String },
    /// Table and mode-effect report for a harmonized file (report.txt).
    Report { harmonized: PathBuf },
}

/// Runs one invocation, returning what it printed to standard output.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.set)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    fs::create_dir_all(&cli.out).map_err(|e| io_err(&cli.out, e))?;
    match &cli.command {
        Command::Process { trace, points } => process(&cfg, trace, *points, &cli.out),
        Command::Harmonize { diary, app } => cmd_harmonize(&cfg, diary, app, &cli.out),
        Command::Estimate {
            harmonized,
            diary,
            app,
            pairs,
        } => estimate(&cfg, harmonized.as_deref(), diary.as_deref(), app.as_deref(), pairs.as_deref(), &cli.out),
        Command::Simulate { scenario } => simulate(&cfg, scenario, &cli.out),
        Command::Report { harmonized } => report(harmonized, &cli.out),
    }
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| io_err(path, e))
}

fn write_file(
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut Vec<u8>) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    let path = dir.join(name);
    fs::write(&path, buf).map_err(|e| io_err(&path, e))
}

fn out_csv(dir: &Path, name: &str) -> impl Fn(csv::Error) -> CliError {
    let path = dir.join(name);
    move |e| io_err(&path, e)
}

fn make_router(cfg: &RunConfig) -> Result<Box<dyn Router>, CliError> {
    match &cfg.router_url {
        None => Ok(Box::new(GreatCircleRouter)),
        Some(url) => {
            let remote = RemoteRouter::from_url(url).map_err(|e| CliError::Config(e.to_string()))?;
            let cached = CachingRouter::new(remote);
            if cfg.router_fallback {
                Ok(Box::new(FallbackRouter::new(cached)))
            } else {
                Ok(Box::new(cached))
            }
        }
    }
}

fn load_gazetteer(cfg: &RunConfig) -> Result<Gazetteer, CliError> {
    match &cfg.gazetteer_path {
        None => Ok(Gazetteer::new(Vec::new(), cfg.match_radius_m)),
        Some(p) => Gazetteer::read(open(p)?, cfg.match_radius_m)
            .map_err(|e| CliError::Validation(format!("{}: {e}", p.display()))),
    }
}

/// Canonical row order: respondent, day, start, end.
fn sort_rows(rows: &mut [DiaryEntry]) {
    rows.sort_by(|a, b| {
        (&a.respondent_id, a.day, a.trip_start, a.trip_end)
            .cmp(&(&b.respondent_id, b.day, b.trip_start, b.trip_end))
    });
}

struct Derived {
    segmentations: Vec<Vec<Segmentation>>,
    rows: Vec<DiaryEntry>,
    pairs: Vec<(f64, f64)>,
}

fn derive(
    cfg: &RunConfig,
    traces: &[Trace],
    gazetteer: &Gazetteer,
    router: &dyn Router,
    tz: FixedOffset,
) -> Result<Derived, RouterError> {
    let per_respondent: Vec<(Vec<Segmentation>, Vec<DiaryEntry>)> = traces
        .par_iter()
        .map(|trace| {
            let segs = segment_trace(trace, &cfg.stop, cfg.max_gap_s);
            let rows = build_diary(&segs, gazetteer, &cfg.modes, router, tz)?;
            Ok((segs, rows))
        })
        .collect::<Result<_, RouterError>>()?;
    let mut segmentations = Vec::with_capacity(per_respondent.len());
    let mut rows = Vec::new();
    for (s, r) in per_respondent {
        segmentations.push(s);
        rows.extend(r);
    }
    sort_rows(&mut rows);
    let pairs = rows
        .iter()
        .filter_map(|r| r.inferred_distance_m.map(|d| (r.distance_m, d)))
        .collect();
    if cfg.diary_distance == DiaryDistance::Route {
        rows = rows.iter().map(DiaryEntry::with_route_distance).collect();
    }
    Ok(Derived {
        segmentations,
        rows,
        pairs,
    })
}

fn router_err(e: RouterError) -> CliError {
    match e {
        RouterError::BadUrl(_) => CliError::Config(e.to_string()),
        _ => CliError::Io(e.to_string()),
    }
}

fn ingest_err(path: &Path, e: IngestError) -> CliError {
    match e {
        IngestError::Io(e) => io_err(path, e),
        IngestError::Csv(e) => csv_err(path, e),
        IngestError::Header { .. } => CliError::Validation(format!("{}: {e}", path.display())),
        IngestError::Invalid(violations) => CliError::Validation(
            violations
                .iter()
                .map(|v| format!("{}: {v}", path.display()))
                .collect::<Vec<_>>()
                .join("\n"),
        ),
    }
}

fn process(cfg: &RunConfig, trace_path: &Path, points: bool, out: &Path) -> Result<String, CliError> {
    let gazetteer = load_gazetteer(cfg)?;
    let router = make_router(cfg)?;
    let traces = read_traces(open(trace_path)?).map_err(|e| ingest_err(trace_path, e))?;
    let d = derive(cfg, &traces, &gazetteer, router.as_ref(), cfg.tz).map_err(router_err)?;
    write_file(out, "diary.csv", |b| {
        write_diary(b, &d.rows).map_err(|e| CliError::Io(e.to_string()))
    })?;
    write_file(out, "pairs.csv", |b| write_pairs(b, &d.pairs).map_err(out_csv(out, "pairs.csv")))?;
    if points {
        let by_trace: Vec<(&Trace, &[Segmentation])> = traces
            .iter()
            .zip(&d.segmentations)
            .map(|(t, s)| (t, s.as_slice()))
            .collect();
        write_file(out, "points.csv", |b| {
            write_point_classes(b, &by_trace, cfg.tz).map_err(out_csv(out, "points.csv"))
        })?;
    }
    Ok(format!(
        "{} respondent(s), {} trip(s)\n",
        traces.len(),
        d.rows.len()
    ))
}

fn diary_file(path: &Path) -> Result<Vec<DiaryEntry>, CliError> {
    read_diary(open(path)?).map_err(|e| match e {
        DiaryError::Io(e) => io_err(path, e),
        DiaryError::Csv(e) => csv_err(path, e),
        e => CliError::Validation(format!("{}: {e}", path.display())),
    })
}

fn report_text(ds: &HarmonizedDataset) -> String {
    format!("{}\n{}\n", format_table(ds), mode_effect_report(ds))
}

fn cmd_harmonize(cfg: &RunConfig, diary: &Path, app: &Path, out: &Path) -> Result<String, CliError> {
    let d = diary_file(diary)?;
    let a = diary_file(app)?;
    let opts = HarmonizeOptions {
        keep_app_labels: cfg.keep_app_labels,
    };
    let ds = harmonize(&d, &a, &opts).map_err(|e| CliError::Validation(e.to_string()))?;
    write_file(out, "harmonized.csv", |b| {
        write_harmonized(b, &ds).map_err(out_csv(out, "harmonized.csv"))
    })?;
    let text = report_text(&ds);
    write_file(out, "report.txt", |b| {
        b.extend_from_slice(text.as_bytes());
        Ok(())
    })?;
    Ok(text)
}

fn harmonized_file(path: &Path) -> Result<HarmonizedDataset, CliError> {
    read_harmonized(open(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn report(harmonized: &Path, out: &Path) -> Result<String, CliError> {
    let ds = harmonized_file(harmonized)?;
    let text = report_text(&ds);
    write_file(out, "report.txt", |b| {
        b.extend_from_slice(text.as_bytes());
        Ok(())
    })?;
    Ok(text)
}

fn estimate(
    cfg: &RunConfig,
    harmonized: Option<&Path>,
    diary: Option<&Path>,
    app: Option<&Path>,
    pairs: Option<&Path>,
    out: &Path,
) -> Result<String, CliError> {
    let (mut diary_rows, mut app_rows) = match harmonized {
        Some(p) => harmonized_file(p)?.split_by_source(),
        None => (Vec::new(), Vec::new()),
    };
    if let Some(p) = diary {
        diary_rows.extend(diary_file(p)?);
    }
    if let Some(p) = app {
        app_rows.extend(diary_file(p)?);
    }
    if harmonized.is_none() && diary.is_none() && app.is_none() {
        return Err(CliError::Config(
            "estimate needs a harmonized file or --diary/--app".into(),
        ));
    }
    let validation = |e: EstimateError| CliError::Validation(e.to_string());
    let mut rows = Vec::new();
    let mut first_err = None;
    let mut per_source = |entries: &[DiaryEntry], tag| {
        if entries.is_empty() {
            return None;
        }
        match estimate_mean_distance(entries, tag, cfg.mode_filter) {
            Ok(e) => Some(e),
            Err(e) => {
                first_err.get_or_insert(e);
                None
            }
        }
    };
    let diary_est = per_source(&diary_rows, SourceTag::Diary);
    let app_est = per_source(&app_rows, SourceTag::App);
    if diary_est.is_none() && app_est.is_none() {
        return Err(validation(first_err.unwrap_or_else(|| {
            EstimateError::NoMatchingTrips(format!("{} in empty input", cfg.mode_filter))
        })));
    }
    rows.extend(diary_est.clone().map(EstimateRow::Source));
    rows.extend(app_est.clone().map(EstimateRow::Source));
    if let Some(p) = pairs {
        let pairs = read_pairs(open(p)?).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
        let factor = calibration_ratio(&pairs).map_err(validation)?;
        rows.push(EstimateRow::Factor(factor.clone()));
        let calibrated = match &diary_est {
            Some(d) => {
                let c = apply_calibration(d, &factor).map_err(validation)?;
                rows.push(EstimateRow::Integrated(c.clone()));
                Some(c.as_source_estimate(SourceTag::Diary))
            }
            None => None,
        };
        let inputs: Vec<_> = calibrated.into_iter().chain(app_est).collect();
        let combined = macro_integrate(&inputs, &cfg.weighting).map_err(validation)?;
        rows.push(EstimateRow::Integrated(combined));
    }
    let mut buf = Vec::new();
    write_estimates(&mut buf, &rows).map_err(out_csv(out, "estimates.csv"))?;
    let path = out.join("estimates.csv");
    fs::write(&path, &buf).map_err(|e| io_err(&path, e))?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

fn load_scenario(arg: &str) -> Result<Scenario, CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        return Scenario::from_toml_str(&text).map_err(|e| CliError::Config(format!("{arg}: {e}")));
    }
    builtin_scenario(arg).ok_or_else(|| {
        CliError::Io(format!(
            "{arg}: no such file or built-in scenario ({})",
            BUILTIN_SCENARIOS.join(", ")
        ))
    })
}

/// One entry per distinct stay address, unlabelled: a phone knows where the
/// respondent went, not why.
fn gazetteer_from_scenario(s: &Scenario, radius_m: f64) -> Gazetteer {
    let mut entries: Vec<GazetteerEntry> = Vec::new();
    for stay in &s.stays {
        if !entries.iter().any(|e| e.address == stay.address) {
            entries.push(GazetteerEntry {
                location: stay.location,
                address: stay.address.clone(),
                label: None,
            });
        }
    }
    Gazetteer::new(entries, radius_m)
}

fn simulate(cfg: &RunConfig, scenario_arg: &str, out: &Path) -> Result<String, CliError> {
    let scenario = load_scenario(scenario_arg)?;
    let truth = generate_truth(&scenario, cfg.seed).map_err(|e| CliError::Config(e.to_string()))?;
    let trace = sensor_observe(&truth, &cfg.sensor, cfg.seed);
    let gazetteer = match &cfg.gazetteer_path {
        Some(_) => load_gazetteer(cfg)?,
        None => gazetteer_from_scenario(&scenario, cfg.match_radius_m),
    };
    let router = make_router(cfg)?;
    let traces: Vec<Trace> = trace.into_iter().collect();
    let derived = derive(cfg, &traces, &gazetteer, router.as_ref(), scenario.tz).map_err(router_err)?;
    let diary = diary_observe(&truth, &cfg.diary_model, cfg.seed);
    let track_rows: Vec<DiaryEntry> = match cfg.diary_distance {
        DiaryDistance::Track => derived.rows.clone(),
        DiaryDistance::Route => {
            let mut r = derived.rows.clone();
            for (row, (track, _)) in r.iter_mut().zip(&derived.pairs) {
                row.distance_m = *track;
            }
            r
        }
    };
    let metrics = evaluate_recovery(&truth, &track_rows);

    write_file(out, "truth.csv", |b| write_truth(b, &truth).map_err(out_csv(out, "truth.csv")))?;
    write_file(out, "sensor.csv", |b| {
        write_traces(b, &traces, scenario.tz).map_err(|e| CliError::Io(e.to_string()))
    })?;
    write_file(out, "gazetteer.csv", |b| {
        gazetteer.write(b).map_err(out_csv(out, "gazetteer.csv"))
    })?;
    write_file(out, "diary.csv", |b| {
        write_diary(b, &diary).map_err(|e| CliError::Io(e.to_string()))
    })?;
    write_file(out, "app.csv", |b| {
        write_diary(b, &derived.rows).map_err(|e| CliError::Io(e.to_string()))
    })?;
    write_file(out, "pairs.csv", |b| {
        write_pairs(b, &derived.pairs).map_err(out_csv(out, "pairs.csv"))
    })?;
    let text = format!("scenario            {}\nseed                {}\n{metrics}\n", scenario.name, cfg.seed);
    write_file(out, "metrics.txt", |b| {
        b.extend_from_slice(text.as_bytes());
        Ok(())
    })?;
    Ok(text)
}

/// Entry point for `main`: prints output or errors and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(text) => {
            use io::Write;
            let _ = io::stdout().write_all(text.as_bytes());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
