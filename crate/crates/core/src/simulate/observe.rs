use chrono::{DateTime, Duration, NaiveTime, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::diary::{Day, DiaryEntry, DistanceKind};
use crate::geo::{haversine_m, GeoPoint};
use crate::trace::Trace;

use super::scenario::{TruthEpisode, TruthTrip};

const SENSOR_STREAM: u64 = 1;
const DIARY_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{field} = {value} is out of range ({expected})")]
    OutOfRange {
        field: &'static str,
        value: f64,
        expected: &'static str,
    },
}

fn out_of_range(field: &'static str, value: f64, expected: &'static str) -> ModelError {
    ModelError::OutOfRange {
        field,
        value,
        expected,
    }
}

/// How a phone samples the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub sampling_interval_s: f64,
    pub gps_noise_sigma_m: f64,
    pub dropout: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            sampling_interval_s: 10.0,
            gps_noise_sigma_m: 5.0,
            dropout: 0.0,
        }
    }
}

impl SensorModel {
    pub fn new(sampling_interval_s: f64, gps_noise_sigma_m: f64, dropout: f64) -> Result<Self, ModelError> {
        if !(sampling_interval_s >= 0.001 && sampling_interval_s.is_finite()) {
            return Err(out_of_range("sampling_interval_s", sampling_interval_s, "> 0"));
        }
        if !(gps_noise_sigma_m >= 0.0 && gps_noise_sigma_m.is_finite()) {
            return Err(out_of_range("gps_noise_sigma_m", gps_noise_sigma_m, ">= 0"));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(out_of_range("dropout", dropout, "in [0, 1)"));
        }
        Ok(SensorModel {
            sampling_interval_s,
            gps_noise_sigma_m,
            dropout,
        })
    }
}

/// How a respondent reports distance in a diary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceReport {
    /// Great-circle distance between the two stays.
    StraightLine,
    /// True travelled length rounded to the nearest 10 m.
    TruthRounded,
}

/// How a respondent fills in a diary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiaryModel {
    pub time_rounding_min: u32,
    pub omission_p0: f64,
    /// Length scale of the omission curve; infinity makes it flat.
    pub omission_lambda_m: f64,
    pub distance_report: DistanceReport,
}

impl Default for DiaryModel {
    fn default() -> Self {
        DiaryModel {
            time_rounding_min: 5,
            omission_p0: 0.5,
            omission_lambda_m: 500.0,
            distance_report: DistanceReport::StraightLine,
        }
    }
}

impl DiaryModel {
    pub fn new(
        time_rounding_min: u32,
        omission_p0: f64,
        omission_lambda_m: f64,
        distance_report: DistanceReport,
    ) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&omission_p0) {
            return Err(out_of_range("omission_p0", omission_p0, "in [0, 1]"));
        }
        if !(omission_lambda_m > 0.0) {
            return Err(out_of_range("omission_lambda_m", omission_lambda_m, "> 0"));
        }
        if time_rounding_min > 24 * 60 {
            return Err(out_of_range(
                "time_rounding_min",
                time_rounding_min as f64,
                "at most one day",
            ));
        }
        Ok(DiaryModel {
            time_rounding_min,
            omission_p0,
            omission_lambda_m,
            distance_report,
        })
    }

    /// Probability that a trip of this length is left out.
    pub fn omission_probability(&self, length_m: f64) -> f64 {
        (self.omission_p0 * (-length_m / self.omission_lambda_m).exp()).clamp(0.0, 1.0)
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Samples the truth over its observation window. Each fix is displaced by
/// independent east and north offsets drawn from N(0, sigma^2) and dropped
/// with the dropout probability. Returns `None` only if every fix was
/// dropped.
pub fn sensor_observe(truth: &TruthEpisode, model: &SensorModel, seed: u64) -> Option<Trace> {
    let mut rng = rng(seed, SENSOR_STREAM);
    let step = Duration::milliseconds((model.sampling_interval_s * 1000.0).round().max(1.0) as i64);
    let (from, to) = truth.observation;
    let mut points = Vec::new();
    let mut t = from;
    while t <= to {
        let keep = rng.gen::<f64>() >= model.dropout;
        let east: f64 = rng.sample(StandardNormal);
        let north: f64 = rng.sample(StandardNormal);
        if keep {
            let pos = truth.position_at(t);
            let sigma = model.gps_noise_sigma_m;
            let pos = if sigma > 0.0 {
                pos.offset_m(east * sigma, north * sigma)
            } else {
                pos
            };
            points.push(GeoPoint::at(pos, t));
        }
        t += step;
    }
    Trace::new(truth.respondent_id.clone(), points).ok()
}

fn round_to_grid(t: NaiveTime, grid_min: u32, up: bool) -> NaiveTime {
    if grid_min == 0 {
        return t;
    }
    let grid = grid_min * 60;
    let s = t.num_seconds_from_midnight();
    let exact = s % grid == 0 && t.nanosecond() == 0;
    let mut r = s / grid * grid;
    if up && !exact {
        r += grid;
    }
    NaiveTime::from_num_seconds_from_midnight_opt(r.min(24 * 3600 - 1), 0).expect("in range")
}

fn report_distance(trip: &TruthTrip, model: &DiaryModel) -> f64 {
    match model.distance_report {
        DistanceReport::StraightLine => haversine_m(
            trip.polyline[0],
            *trip.polyline.last().expect("non-empty polyline"),
        ),
        DistanceReport::TruthRounded => (trip.length_m / 10.0).round() * 10.0,
    }
}

/// The diary a respondent would fill in for the observed trips: some are
/// forgotten, start times are rounded down and end times up to the grid, and
/// the destination is named by the stay's address and label.
pub fn diary_observe(truth: &TruthEpisode, model: &DiaryModel, seed: u64) -> Vec<DiaryEntry> {
    let mut rng = rng(seed, DIARY_STREAM);
    let mut out = Vec::new();
    for (k, trip) in truth.observed_trips() {
        let u: f64 = rng.gen();
        if u < model.omission_probability(trip.length_m) {
            continue;
        }
        let dest = &truth.stays[k + 1];
        let start = local(trip.start, truth);
        let end = local(trip.end, truth);
        out.push(DiaryEntry {
            respondent_id: truth.respondent_id.clone(),
            day: Day::Date(start.date_naive()),
            label: dest.label.clone(),
            address: Some(dest.address.clone()),
            trip_start: round_to_grid(start.time(), model.time_rounding_min, false),
            trip_end: round_to_grid(end.time(), model.time_rounding_min, true),
            transport_method: trip.mode,
            distance_m: report_distance(trip, model),
            distance_kind: DistanceKind::RespondentReported,
            inferred_distance_m: None,
        });
    }
    out
}

fn local(t: DateTime<Utc>, truth: &TruthEpisode) -> DateTime<chrono::FixedOffset> {
    t.with_timezone(&truth.tz)
}
