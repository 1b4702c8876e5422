//! Synthetic ground truth with matching sensor and diary observations.
//!
//! A [`Scenario`] is a day plan of stays joined by trips. [`generate_truth`]
//! lays it out in time, [`sensor_observe`] samples it like a phone would,
//! [`diary_observe`] reports it like a respondent would, and
//! [`evaluate_recovery`] scores a derived diary against the truth.

mod observe;
mod recovery;
mod scenario;

pub use observe::{diary_observe, sensor_observe, DiaryModel, DistanceReport, ModelError, SensorModel};
pub use recovery::{evaluate_recovery, RecoveryMetrics};
pub use scenario::{
    generate_truth, mode_speed_mps, Scenario, ScenarioError, StaySpec, TripSpec, TruthEpisode,
    TruthStay, TruthTrip,
};

use std::io;

use crate::trace::format_timestamp;

const WORKED_EXAMPLE: &str = include_str!("../../../../data/worked_example/scenario.toml");
const COMMUTE20: &str = include_str!("../../../../data/commute20/scenario.toml");

/// Names accepted by [`builtin_scenario`].
pub const BUILTIN_SCENARIOS: [&str; 2] = ["worked_example", "commute20"];

/// The bundled scenarios: `worked_example` is a home, school, home, work
/// morning; `commute20` is a 20-trip day over all four modes.
pub fn builtin_scenario(name: &str) -> Option<Scenario> {
    let text = match name {
        "worked_example" => WORKED_EXAMPLE,
        "commute20" => COMMUTE20,
        _ => return None,
    };
    Some(Scenario::from_toml_str(text).expect("bundled scenarios parse"))
}

pub const TRUTH_HEADER: [&str; 10] = [
    "respondent_id",
    "kind",
    "start",
    "end",
    "mode",
    "length_m",
    "address",
    "label",
    "lat",
    "lon",
];

/// One row per stay and trip in time order. Stays carry their location;
/// trips their mode and true length.
pub fn write_truth<W: io::Write>(writer: W, truth: &TruthEpisode) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(TRUTH_HEADER)?;
    let ts = |t| format_timestamp(t, truth.tz);
    for (k, stay) in truth.stays.iter().enumerate() {
        wtr.write_record([
            truth.respondent_id.as_str(),
            "stay",
            &ts(stay.start),
            &ts(stay.end),
            "",
            "",
            &stay.address,
            stay.label.as_deref().unwrap_or(""),
            &format!("{:.7}", stay.location.lat()),
            &format!("{:.7}", stay.location.lon()),
        ])?;
        if let Some(trip) = truth.trips.get(k) {
            wtr.write_record([
                truth.respondent_id.as_str(),
                "trip",
                &ts(trip.start),
                &ts(trip.end),
                trip.mode.as_str(),
                &format!("{:.3}", trip.length_m),
                "",
                "",
                "",
                "",
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}
