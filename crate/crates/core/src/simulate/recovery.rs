use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};

use crate::diary::{Day, DiaryEntry};

use super::scenario::TruthEpisode;

/// How well a derived diary recovers the true trips.
///
/// Rates are `None` when their denominator is empty; the error means are
/// `None` when nothing matched.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryMetrics {
    pub truth_trips: usize,
    pub derived_trips: usize,
    pub matched: usize,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub start_mae_s: Option<f64>,
    pub end_mae_s: Option<f64>,
    pub distance_rel_error: Option<f64>,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "EMPTY".into())
}

impl std::fmt::Display for RecoveryMetrics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "truth_trips         {}", self.truth_trips)?;
        writeln!(f, "derived_trips       {}", self.derived_trips)?;
        writeln!(f, "matched             {}", self.matched)?;
        writeln!(f, "recall              {}", fmt_opt(self.recall))?;
        writeln!(f, "precision           {}", fmt_opt(self.precision))?;
        writeln!(f, "start_mae_s         {}", fmt_opt(self.start_mae_s))?;
        writeln!(f, "end_mae_s           {}", fmt_opt(self.end_mae_s))?;
        write!(f, "distance_rel_error  {}", fmt_opt(self.distance_rel_error))
    }
}

fn interval(e: &DiaryEntry, truth: &TruthEpisode, first_day: NaiveDate) -> (DateTime<Utc>, DateTime<Utc>) {
    let date = match e.day {
        Day::Date(d) => d,
        Day::Index(n) => first_day + Duration::days(n.saturating_sub(1) as i64),
    };
    let at = |t| {
        truth
            .tz
            .from_local_datetime(&date.and_time(t))
            .single()
            .expect("fixed offsets are unambiguous")
            .with_timezone(&Utc)
    };
    let start = at(e.trip_start);
    let mut end = at(e.trip_end);
    if end < start {
        end += Duration::days(1);
    }
    (start, end)
}

fn overlap_s(a: (DateTime<Utc>, DateTime<Utc>), b: (DateTime<Utc>, DateTime<Utc>)) -> f64 {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    ((hi - lo).num_milliseconds() as f64 / 1000.0).max(0.0)
}

fn len_s(a: (DateTime<Utc>, DateTime<Utc>)) -> f64 {
    (a.1 - a.0).num_milliseconds() as f64 / 1000.0
}

/// Matches derived trips to the observed truth trips one to one, greedily by
/// largest time overlap. A pair qualifies when the overlap covers at least
/// half of each trip. Days given as numbers count from the truth's first
/// local day.
pub fn evaluate_recovery(truth: &TruthEpisode, derived: &[DiaryEntry]) -> RecoveryMetrics {
    let truth_trips: Vec<_> = truth
        .observed_trips()
        .map(|(_, t)| (t, (t.start, t.end)))
        .collect();
    let first_day = truth.observation.0.with_timezone(&truth.tz).date_naive();
    let derived_iv: Vec<_> = derived
        .iter()
        .map(|e| interval(e, truth, first_day))
        .collect();

    let mut candidates = Vec::new();
    for (i, (_, tiv)) in truth_trips.iter().enumerate() {
        for (j, div) in derived_iv.iter().enumerate() {
            let o = overlap_s(*tiv, *div);
            if o > 0.0 && o >= 0.5 * len_s(*tiv) && o >= 0.5 * len_s(*div) {
                candidates.push((o, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut truth_used = vec![false; truth_trips.len()];
    let mut derived_used = vec![false; derived.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !truth_used[i] && !derived_used[j] {
            truth_used[i] = true;
            derived_used[j] = true;
            pairs.push((i, j));
        }
    }

    let matched = pairs.len();
    let ratio = |n: usize, d: usize| (d > 0).then(|| n as f64 / d as f64);
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let start_err = pairs
        .iter()
        .map(|&(i, j)| (truth_trips[i].1 .0 - derived_iv[j].0).num_milliseconds().abs() as f64 / 1000.0)
        .collect();
    let end_err = pairs
        .iter()
        .map(|&(i, j)| (truth_trips[i].1 .1 - derived_iv[j].1).num_milliseconds().abs() as f64 / 1000.0)
        .collect();
    let dist_err = pairs
        .iter()
        .filter(|&&(i, _)| truth_trips[i].0.length_m > 0.0)
        .map(|&(i, j)| {
            let t = truth_trips[i].0.length_m;
            (derived[j].distance_m - t).abs() / t
        })
        .collect();
    RecoveryMetrics {
        truth_trips: truth_trips.len(),
        derived_trips: derived.len(),
        matched,
        recall: ratio(matched, truth_trips.len()),
        precision: ratio(matched, derived.len()),
        start_mae_s: mean(start_err),
        end_mae_s: mean(end_err),
        distance_rel_error: mean(dist_err),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diary::DistanceKind;
    use crate::simulate::{generate_truth, Scenario};

    fn truth() -> TruthEpisode {
        let mut text = String::from("date = \"2024-05-06\"\n");
        for k in 0..5 {
            if k > 0 {
                text.push_str("[[trip]]\nmode = \"Bike\"\n");
            }
            text.push_str(&format!(
                "[[stay]]\naddress = \"{k} St.\"\nlat = 52.0\nlon = {}\n{}duration_s = 900\n",
                5.0 + 0.01 * k as f64,
                if k == 0 { "start = \"08:00\"\n" } else { "" }
            ));
        }
        generate_truth(&Scenario::from_toml_str(&text).unwrap(), 0).unwrap()
    }

    fn as_entries(t: &TruthEpisode) -> Vec<DiaryEntry> {
        t.trips
            .iter()
            .map(|trip| {
                let s = trip.start.with_timezone(&t.tz);
                DiaryEntry {
                    respondent_id: t.respondent_id.clone(),
                    day: Day::Date(s.date_naive()),
                    label: None,
                    address: None,
                    trip_start: s.time(),
                    trip_end: trip.end.with_timezone(&t.tz).time(),
                    transport_method: trip.mode,
                    distance_m: trip.length_m,
                    distance_kind: DistanceKind::TrackMeasured,
                    inferred_distance_m: None,
                }
            })
            .collect()
    }

    #[test]
    fn perfect_recovery() {
        let t = truth();
        let m = evaluate_recovery(&t, &as_entries(&t));
        assert_eq!(m.matched, 4);
        assert_eq!(m.recall, Some(1.0));
        assert_eq!(m.precision, Some(1.0));
        assert_eq!(m.start_mae_s, Some(0.0));
        assert_eq!(m.end_mae_s, Some(0.0));
        assert_eq!(m.distance_rel_error, Some(0.0));
    }

    #[test]
    fn half_missing_halves_recall() {
        let t = truth();
        let rows: Vec<_> = as_entries(&t).into_iter().step_by(2).collect();
        let m = evaluate_recovery(&t, &rows);
        assert_eq!(m.recall, Some(0.5));
        assert_eq!(m.precision, Some(1.0));
    }

    #[test]
    fn small_overlaps_do_not_match() {
        let t = truth();
        let mut rows = as_entries(&t);
        for r in &mut rows {
            r.trip_start += Duration::minutes(10);
            r.trip_end += Duration::minutes(10);
        }
        let m = evaluate_recovery(&t, &rows);
        assert_eq!(m.matched, 0);
        assert_eq!(m.start_mae_s, None);
        let empty = evaluate_recovery(&t, &[]);
        assert_eq!(empty.precision, None);
        assert_eq!(empty.recall, Some(0.0));
    }

    #[test]
    fn numbered_days_count_from_the_first() {
        let t = truth();
        let mut rows = as_entries(&t);
        for r in &mut rows {
            r.day = Day::Index(1);
        }
        assert_eq!(evaluate_recovery(&t, &rows).recall, Some(1.0));
    }
}
