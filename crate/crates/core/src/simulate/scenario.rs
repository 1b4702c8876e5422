use chrono::{DateTime, Duration, FixedOffset, NaiveDate, NaiveTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::diary::{parse_time, TransportMode};
use crate::geo::{haversine_m, intermediate, track_length_m, LatLon};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::InvalidScenario(msg.into())
}

/// Travel speed used by the simulator for each mode, in m/s.
pub fn mode_speed_mps(mode: TransportMode) -> Option<f64> {
    match mode {
        TransportMode::Walk => Some(1.4),
        TransportMode::Bike => Some(4.5),
        TransportMode::Car => Some(13.0),
        TransportMode::Train => Some(30.0),
        TransportMode::Unknown => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaySpec {
    pub location: LatLon,
    pub address: String,
    pub label: Option<String>,
    /// Defaults to the arrival time of the trip leading here.
    pub start: Option<NaiveTime>,
    pub end: Option<NaiveTime>,
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripSpec {
    pub mode: TransportMode,
    /// Intermediate points between the two stays.
    pub waypoints: Vec<LatLon>,
}

/// A day plan: stays joined by trips. Clock times are local to `tz` on
/// `date`; a stay running past midnight is given by `duration_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub respondent_id: String,
    pub date: NaiveDate,
    pub tz: FixedOffset,
    /// Only this local window is seen by the sensor and the diary.
    pub observation: Option<(NaiveTime, NaiveTime)>,
    /// Stays given by `duration_s` vary uniformly by up to this much.
    pub dwell_jitter_s: f64,
    pub stays: Vec<StaySpec>,
    pub trips: Vec<TripSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    respondent_id: Option<String>,
    date: String,
    #[serde(default)]
    tz_offset: Option<String>,
    #[serde(default)]
    dwell_jitter_s: f64,
    observation: Option<RawWindow>,
    #[serde(default)]
    stay: Vec<RawStay>,
    #[serde(default)]
    trip: Vec<RawTrip>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWindow {
    start: String,
    end: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStay {
    address: String,
    label: Option<String>,
    lat: f64,
    lon: f64,
    start: Option<String>,
    end: Option<String>,
    duration_s: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrip {
    mode: String,
    #[serde(default)]
    waypoints: Vec<[f64; 2]>,
}

fn time(s: Option<&String>) -> Result<Option<NaiveTime>, ScenarioError> {
    s.map(|s| parse_time(s).map_err(invalid)).transpose()
}

fn location(lat: f64, lon: f64) -> Result<LatLon, ScenarioError> {
    LatLon::new(lat, lon).map_err(|e| invalid(e.to_string()))
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Scenario, ScenarioError> {
        let raw: RawScenario = toml::from_str(s).map_err(|e| invalid(e.to_string()))?;
        let date = NaiveDate::parse_from_str(raw.date.trim(), "%Y-%m-%d")
            .map_err(|_| invalid(format!("date {:?} is not YYYY-MM-DD", raw.date)))?;
        let tz = match raw.tz_offset.as_deref() {
            None => FixedOffset::east_opt(0).expect("zero offset"),
            Some(s) => s
                .parse::<FixedOffset>()
                .map_err(|_| invalid(format!("tz_offset {s:?} is not like +01:00")))?,
        };
        let observation = match raw.observation {
            None => None,
            Some(w) => Some((
                parse_time(&w.start).map_err(invalid)?,
                parse_time(&w.end).map_err(invalid)?,
            )),
        };
        let stays = raw
            .stay
            .iter()
            .map(|s| {
                Ok(StaySpec {
                    location: location(s.lat, s.lon)?,
                    address: s.address.clone(),
                    label: s.label.clone().filter(|l| !l.is_empty()),
                    start: time(s.start.as_ref())?,
                    end: time(s.end.as_ref())?,
                    duration_s: s.duration_s,
                })
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        let trips = raw
            .trip
            .iter()
            .map(|t| {
                Ok(TripSpec {
                    mode: t.mode.parse().map_err(|e: crate::diary::UnknownMode| invalid(e.to_string()))?,
                    waypoints: t
                        .waypoints
                        .iter()
                        .map(|[lat, lon]| location(*lat, *lon))
                        .collect::<Result<_, _>>()?,
                })
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        let scenario = Scenario {
            name: raw.name.unwrap_or_else(|| "scenario".into()),
            respondent_id: raw.respondent_id.unwrap_or_else(|| "R1".into()),
            date,
            tz,
            observation,
            dwell_jitter_s: raw.dwell_jitter_s,
            stays,
            trips,
        };
        scenario.check()?;
        Ok(scenario)
    }

    fn check(&self) -> Result<(), ScenarioError> {
        if self.stays.is_empty() {
            return Err(invalid("at least one stay is required"));
        }
        if self.trips.len() + 1 != self.stays.len() {
            return Err(invalid(format!(
                "{} stays need {} trips, found {}",
                self.stays.len(),
                self.stays.len() - 1,
                self.trips.len()
            )));
        }
        if self.stays[0].start.is_none() {
            return Err(invalid("the first stay needs a start time"));
        }
        if !(self.dwell_jitter_s >= 0.0) || !self.dwell_jitter_s.is_finite() {
            return Err(invalid("dwell_jitter_s must be a finite number >= 0"));
        }
        for (k, s) in self.stays.iter().enumerate() {
            if s.address.trim().is_empty() {
                return Err(invalid(format!("stay {} has an empty address", k + 1)));
            }
            match (s.end, s.duration_s) {
                (Some(_), None) => {}
                (None, Some(d)) if d.is_finite() && d > 0.0 => {}
                (None, Some(_)) => {
                    return Err(invalid(format!("stay {} duration_s must be positive", k + 1)))
                }
                _ => {
                    return Err(invalid(format!(
                        "stay {} needs exactly one of end and duration_s",
                        k + 1
                    )))
                }
            }
        }
        for (k, t) in self.trips.iter().enumerate() {
            if mode_speed_mps(t.mode).is_none() {
                return Err(invalid(format!("trip {} has no simulated speed for {}", k + 1, t.mode)));
            }
        }
        Ok(())
    }

    fn instant(&self, t: NaiveTime) -> DateTime<Utc> {
        self.tz
            .from_local_datetime(&self.date.and_time(t))
            .single()
            .expect("fixed offsets are unambiguous")
            .with_timezone(&Utc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthStay {
    pub location: LatLon,
    pub address: String,
    pub label: Option<String>,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

/// A trip runs from the end of one stay to the start of the next. The
/// traveller moves at the mode's speed from `start`, reaches the destination
/// at `arrival`, and waits there until `end` if the next stay starts later.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTrip {
    pub polyline: Vec<LatLon>,
    pub mode: TransportMode,
    pub start: DateTime<Utc>,
    pub arrival: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub length_m: f64,
}

/// True travel behaviour of one respondent.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthEpisode {
    pub respondent_id: String,
    pub tz: FixedOffset,
    pub stays: Vec<TruthStay>,
    /// `trips[k]` joins `stays[k]` and `stays[k + 1]`.
    pub trips: Vec<TruthTrip>,
    pub observation: (DateTime<Utc>, DateTime<Utc>),
}

impl TruthEpisode {
    /// Where the respondent is at `t`. Before the first stay and after the
    /// last one, the nearest stay's location.
    pub fn position_at(&self, t: DateTime<Utc>) -> LatLon {
        for (k, trip) in self.trips.iter().enumerate() {
            if t < trip.start {
                return self.stays[k].location;
            }
            if t < trip.end {
                let elapsed = seconds(t - trip.start);
                let travel = seconds(trip.arrival - trip.start);
                if travel <= 0.0 || elapsed >= travel {
                    return *trip.polyline.last().expect("non-empty polyline");
                }
                return along(&trip.polyline, trip.length_m * elapsed / travel);
            }
        }
        self.stays.last().expect("at least one stay").location
    }

    /// Trips lying entirely inside the observation window.
    pub fn observed_trips(&self) -> impl Iterator<Item = (usize, &TruthTrip)> {
        let (from, to) = self.observation;
        self.trips
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.start >= from && t.end <= to)
    }
}

fn seconds(d: Duration) -> f64 {
    d.num_milliseconds() as f64 / 1000.0
}

fn millis(s: f64) -> Duration {
    Duration::milliseconds((s * 1000.0).round() as i64)
}

/// Point `distance_m` along a polyline, clamped to its ends.
fn along(polyline: &[LatLon], distance_m: f64) -> LatLon {
    let mut left = distance_m.max(0.0);
    for w in polyline.windows(2) {
        let d = haversine_m(w[0], w[1]);
        if left <= d {
            return if d > 0.0 {
                intermediate(w[0], w[1], left / d)
            } else {
                w[0]
            };
        }
        left -= d;
    }
    *polyline.last().expect("non-empty polyline")
}

/// Lays the scenario out in time. The seed only matters when
/// `dwell_jitter_s` is positive.
pub fn generate_truth(scenario: &Scenario, seed: u64) -> Result<TruthEpisode, ScenarioError> {
    scenario.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stays = Vec::with_capacity(scenario.stays.len());
    let mut trips = Vec::with_capacity(scenario.trips.len());
    let mut arrival: Option<DateTime<Utc>> = None;
    for (k, spec) in scenario.stays.iter().enumerate() {
        let start = match (spec.start, arrival) {
            (Some(t), Some(a)) => {
                let t = scenario.instant(t);
                if t < a {
                    return Err(invalid(format!(
                        "trip {k} cannot reach stay {} by its start time",
                        k + 1
                    )));
                }
                t
            }
            (Some(t), None) => scenario.instant(t),
            (None, Some(a)) => a,
            (None, None) => unreachable!("first stay start is checked"),
        };
        let end = match (spec.end, spec.duration_s) {
            (Some(t), _) => scenario.instant(t),
            (None, Some(d)) => {
                let jitter = if scenario.dwell_jitter_s > 0.0 {
                    rng.gen_range(-scenario.dwell_jitter_s..=scenario.dwell_jitter_s)
                } else {
                    0.0
                };
                start + millis((d + jitter).max(1.0))
            }
            (None, None) => unreachable!("stay times are checked"),
        };
        if end <= start {
            return Err(invalid(format!("stay {} ends before it starts", k + 1)));
        }
        stays.push(TruthStay {
            location: spec.location,
            address: spec.address.clone(),
            label: spec.label.clone(),
            start,
            end,
        });
        arrival = scenario.trips.get(k).map(|trip| {
            let next = scenario.stays[k + 1].location;
            let mut polyline = Vec::with_capacity(trip.waypoints.len() + 2);
            polyline.push(spec.location);
            polyline.extend(trip.waypoints.iter().copied());
            polyline.push(next);
            let length_m = track_length_m(&polyline);
            let speed = mode_speed_mps(trip.mode).expect("modes are checked");
            let arrive = end + millis(length_m / speed);
            trips.push(TruthTrip {
                polyline,
                mode: trip.mode,
                start: end,
                arrival: arrive,
                end: arrive,
                length_m,
            });
            arrive
        });
    }
    for (k, trip) in trips.iter_mut().enumerate() {
        trip.end = stays[k + 1].start;
    }
    let observation = match scenario.observation {
        Some((a, b)) => {
            let (a, b) = (scenario.instant(a), scenario.instant(b));
            if b <= a {
                return Err(invalid("observation window ends before it starts"));
            }
            (a, b)
        }
        None => (stays[0].start, stays.last().expect("non-empty").end),
    };
    Ok(TruthEpisode {
        respondent_id: scenario.respondent_id.clone(),
        tz: scenario.tz,
        stays,
        trips,
        observation,
    })
}
