use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use tripdiary::diary::{read_diary, DiaryEntry, DistanceKind, TransportMode};
use tripdiary::episode::{build_diary, Gazetteer, GreatCircleRouter, ModeThresholds};
use tripdiary::harmonize::SourceTag;
use tripdiary::multisource::{
    apply_calibration, calibration_ratio, estimate_mean_distance, macro_integrate, CalibrationFactor,
    EstimateError, ModeFilter, SourceEstimate, Weighting,
};
use tripdiary::simulate::{
    builtin_scenario, diary_observe, generate_truth, sensor_observe, DiaryModel, DistanceReport,
    SensorModel,
};
use tripdiary::stops::{segment_trace, StopParams};
use tripdiary::trace::DEFAULT_MAX_GAP_S;

const APP: &str = include_str!("../../../data/worked_example/app.csv");

fn est(value: f64, variance: Option<f64>, n: usize) -> SourceEstimate {
    SourceEstimate {
        statistic: "mean_trip_distance_m".into(),
        source: SourceTag::Diary,
        value,
        n,
        variance,
    }
}

#[test]
fn worked_example_walk_mean() {
    let app = read_diary(APP.as_bytes()).unwrap();
    let e = estimate_mean_distance(&app, SourceTag::App, ModeFilter::Only(TransportMode::Walk)).unwrap();
    assert_eq!(e.value, 210.0);
    assert_eq!(e.n, 2);
    assert_eq!(e.statistic, "mean_walk_trip_distance_m");
    assert!(matches!(
        estimate_mean_distance(&app, SourceTag::App, ModeFilter::Only(TransportMode::Car)),
        Err(EstimateError::NoMatchingTrips(_))
    ));
}

#[test]
fn worked_example_calibration() {
    let f = calibration_ratio(&[(430.0, 210.0), (210.0, 210.0)]).unwrap();
    assert!((f.ratio - 640.0 / 420.0).abs() < 1e-12);
    assert!((f.ratio - 1.5238).abs() <= 1e-3);
    let one = calibration_ratio(&[(430.0, 210.0)]).unwrap();
    let c = apply_calibration(&est(210.0, None, 2), &one).unwrap();
    assert!((c.value - 430.0).abs() <= 0.01);
    assert!((c.value - 210.0 - 220.0).abs() <= 0.01);
    assert!(matches!(calibration_ratio(&[]), Err(EstimateError::EmptyPairs)));
    assert!(matches!(
        calibration_ratio(&[(1.0, 0.0)]),
        Err(EstimateError::ZeroInferredDistance(1))
    ));
    let mut app = est(210.0, None, 2);
    app.source = SourceTag::App;
    assert!(matches!(apply_calibration(&app, &one), Err(EstimateError::SourceMismatch(_))));
}

#[test]
fn macro_weights_by_inverse_variance() {
    let equal = macro_integrate(&[est(200.0, Some(4.0), 5), est(220.0, Some(4.0), 5)], &Weighting::InverseVariance).unwrap();
    assert!((equal.value - 210.0).abs() < 1e-12);
    let skew = macro_integrate(&[est(100.0, Some(1.0), 5), est(200.0, Some(3.0), 5)], &Weighting::Auto).unwrap();
    let w = skew.weights();
    assert!((w[0] - 0.75).abs() < 1e-12 && (w[1] - 0.25).abs() < 1e-12);
    assert!((skew.value - 125.0).abs() < 1e-12);
    let single = macro_integrate(&[est(42.0, None, 1)], &Weighting::Auto).unwrap();
    assert_eq!(single.value, 42.0);
    assert_eq!(single.weights(), vec![1.0]);
    assert!(matches!(
        macro_integrate(&[est(1.0, None, 1), est(2.0, Some(1.0), 1)], &Weighting::InverseVariance),
        Err(EstimateError::MissingVariance(_))
    ));
    let mut other = est(1.0, None, 1);
    other.statistic = "something_else".into();
    assert!(matches!(
        macro_integrate(&[est(1.0, None, 1), other], &Weighting::ByN),
        Err(EstimateError::MixedStatistics(..))
    ));
}

fn trips_with(distances: &[f64]) -> Vec<DiaryEntry> {
    let t = chrono::NaiveTime::from_hms_opt(8, 0, 0).unwrap();
    distances
        .iter()
        .map(|&d| DiaryEntry {
            respondent_id: "R".into(),
            day: tripdiary::diary::Day::Index(1),
            label: None,
            address: None,
            trip_start: t,
            trip_end: t + chrono::Duration::minutes(10),
            transport_method: TransportMode::Walk,
            distance_m: d,
            distance_kind: DistanceKind::RespondentReported,
            inferred_distance_m: None,
        })
        .collect()
}

#[test]
fn mean_of_simulated_trips_is_within_three_standard_errors() {
    let truth_mean = 800.0;
    let dist = Exp::new(1.0 / truth_mean).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let d: Vec<f64> = (0..1000).map(|_| dist.sample(&mut rng)).collect();
    let e = estimate_mean_distance(&trips_with(&d), SourceTag::Diary, ModeFilter::All).unwrap();
    let se = e.variance.unwrap().sqrt();
    assert!((e.value - truth_mean).abs() <= 3.0 * se, "{} +- {}", e.value, se);
    let single = estimate_mean_distance(&trips_with(&[123.0]), SourceTag::Diary, ModeFilter::All).unwrap();
    assert_eq!((single.value, single.variance), (123.0, None));
}

#[test]
fn calibrated_diary_recovers_the_app_mean() {
    let truth = generate_truth(&builtin_scenario("commute20").unwrap(), 5).unwrap();
    let trace = sensor_observe(&truth, &SensorModel::new(1.0, 0.0, 0.0).unwrap(), 5).unwrap();
    let segs = segment_trace(&trace, &StopParams::default(), DEFAULT_MAX_GAP_S);
    let app = build_diary(&segs, &Gazetteer::empty(), &ModeThresholds::default(), &GreatCircleRouter, truth.tz).unwrap();
    let diary = diary_observe(&truth, &DiaryModel::new(5, 0.0, 500.0, DistanceReport::StraightLine).unwrap(), 5);
    assert_eq!(app.len(), diary.len());
    let pairs: Vec<_> = app.iter().map(|e| (e.distance_m, e.inferred_distance_m.unwrap())).collect();
    let f = calibration_ratio(&pairs).unwrap();
    assert!(f.ratio > 1.05, "the routes are not straight: {}", f.ratio);
    let app_mean = estimate_mean_distance(&app, SourceTag::App, ModeFilter::All).unwrap().value;
    let diary_est = estimate_mean_distance(&diary, SourceTag::Diary, ModeFilter::All).unwrap();
    let calibrated = apply_calibration(&diary_est, &f).unwrap().value;
    let rel = (calibrated - app_mean).abs() / app_mean;
    assert!(rel <= 0.02, "calibrated {calibrated} vs app {app_mean} ({rel})");
    assert!((diary_est.value - app_mean).abs() / app_mean > 0.02, "uncalibrated should be off");
}

fn estimates() -> impl Strategy<Value = Vec<SourceEstimate>> {
    prop::collection::vec((0.0f64..10_000.0, prop::option::of(0.01f64..1e4), 1usize..500), 1..6)
        .prop_map(|v| v.into_iter().map(|(x, var, n)| est(x, var, n)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn ratio_is_scale_invariant(
        pairs in prop::collection::vec((0.0f64..5000.0, 1.0f64..5000.0), 1..20),
        c in 1e-3f64..1e3,
    ) {
        let base = calibration_ratio(&pairs).unwrap().ratio;
        let scaled: Vec<_> = pairs.iter().map(|(a, i)| (a * c, i * c)).collect();
        let r = calibration_ratio(&scaled).unwrap().ratio;
        prop_assert!((r - base).abs() <= 1e-12 * base.max(1.0), "{} vs {}", r, base);
    }

    #[test]
    fn integration_stays_within_bounds(es in estimates(), w in prop::collection::vec(0.0f64..10.0, 6)) {
        let lo = es.iter().map(|e| e.value).fold(f64::INFINITY, f64::min);
        let hi = es.iter().map(|e| e.value).fold(f64::NEG_INFINITY, f64::max);
        let mut weightings = vec![Weighting::Auto, Weighting::ByN];
        let explicit: Vec<f64> = w[..es.len()].to_vec();
        if explicit.iter().sum::<f64>() > 0.0 {
            weightings.push(Weighting::Explicit(explicit));
        }
        for weighting in weightings {
            let m = macro_integrate(&es, &weighting).unwrap();
            prop_assert!(m.value >= lo - 1e-9 && m.value <= hi + 1e-9);
            prop_assert!((m.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(m.weights().iter().all(|w| *w >= 0.0));
        }
    }

    #[test]
    fn calibration_composes(value in 0.0f64..10_000.0, r1 in 0.1f64..10.0, r2 in 0.1f64..10.0) {
        let e = est(value, Some(4.0), 10);
        let once = apply_calibration(&e, &CalibrationFactor::from_ratio(r1 * r2)).unwrap();
        let first = apply_calibration(&e, &CalibrationFactor::from_ratio(r1)).unwrap();
        let twice = apply_calibration(&first.as_source_estimate(SourceTag::Diary), &CalibrationFactor::from_ratio(r2)).unwrap();
        prop_assert!((once.value - twice.value).abs() <= 1e-9 * once.value.max(1.0));
        let identity = apply_calibration(&e, &CalibrationFactor::from_ratio(1.0)).unwrap();
        prop_assert_eq!(identity.value, value);
    }
}
