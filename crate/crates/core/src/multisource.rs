//! Multisource integration: each source is summarized on its own, diary
//! distances are corrected with the actual/inferred distance ratio, and only
//! the final statistics are combined.

use std::fmt;
use std::io;

use thiserror::Error;

use crate::diary::{DiaryEntry, TransportMode};
use crate::harmonize::SourceTag;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("no trips match {0}")]
    NoMatchingTrips(String),
    #[error("no distance pairs given")]
    EmptyPairs,
    #[error("pair {0} has a zero inferred distance")]
    ZeroInferredDistance(usize),
    #[error("pair {0} has a negative or non-finite distance")]
    InvalidPair(usize),
    #[error("calibration applies to diary estimates, got a {0} estimate")]
    SourceMismatch(SourceTag),
    #[error("cannot combine different statistics: {0} and {1}")]
    MixedStatistics(String, String),
    #[error("inverse-variance weighting needs a positive variance on every estimate ({0} lacks one)")]
    MissingVariance(SourceTag),
    #[error("nothing to integrate")]
    NoEstimates,
    #[error("invalid weights: {0}")]
    BadWeights(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeFilter {
    All,
    Only(TransportMode),
}

impl ModeFilter {
    fn matches(&self, m: TransportMode) -> bool {
        match self {
            ModeFilter::All => true,
            ModeFilter::Only(x) => *x == m,
        }
    }

    /// Statistic name for the mean distance under this filter.
    pub fn mean_distance_statistic(&self) -> String {
        match self {
            ModeFilter::All => "mean_trip_distance_m".to_string(),
            ModeFilter::Only(m) => format!("mean_{}_trip_distance_m", m.as_str().to_lowercase()),
        }
    }
}

impl fmt::Display for ModeFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeFilter::All => f.write_str("ALL"),
            ModeFilter::Only(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceEstimate {
    pub statistic: String,
    pub source: SourceTag,
    pub value: f64,
    pub n: usize,
    pub variance: Option<f64>,
}

/// Mean trip distance over the trips passing `filter`. The variance is that
/// of the mean (sample variance over n) and is only given for n >= 2.
pub fn estimate_mean_distance(
    entries: &[DiaryEntry],
    source: SourceTag,
    filter: ModeFilter,
) -> Result<SourceEstimate, EstimateError> {
    let d: Vec<f64> = entries
        .iter()
        .filter(|e| filter.matches(e.transport_method))
        .map(|e| e.distance_m)
        .collect();
    if d.is_empty() {
        return Err(EstimateError::NoMatchingTrips(format!("{filter} in {source}")));
    }
    let n = d.len();
    let mean = d.iter().sum::<f64>() / n as f64;
    let variance = (n >= 2).then(|| {
        let ss: f64 = d.iter().map(|x| (x - mean).powi(2)).sum();
        ss / (n as f64 - 1.0) / n as f64
    });
    Ok(SourceEstimate {
        statistic: filter.mean_distance_statistic(),
        source,
        value: mean,
        n,
        variance,
    })
}

/// Ratio-of-sums correction factor between measured and inferred distance.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationFactor {
    pub ratio: f64,
    pub n_pairs: usize,
    pub pair_ratios: Vec<f64>,
}

impl CalibrationFactor {
    /// A factor from a known ratio, without pair data.
    pub fn from_ratio(ratio: f64) -> Self {
        CalibrationFactor {
            ratio,
            n_pairs: 1,
            pair_ratios: vec![ratio],
        }
    }

    pub fn pair_ratio_range(&self) -> (f64, f64) {
        self.pair_ratios
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(*r), hi.max(*r)))
    }

    pub fn pair_ratio_sd(&self) -> Option<f64> {
        let n = self.pair_ratios.len();
        if n < 2 {
            return None;
        }
        let mean = self.pair_ratios.iter().sum::<f64>() / n as f64;
        let ss: f64 = self.pair_ratios.iter().map(|r| (r - mean).powi(2)).sum();
        Some((ss / (n as f64 - 1.0)).sqrt())
    }
}

/// `pairs` are `(actual_m, inferred_m)`.
pub fn calibration_ratio(pairs: &[(f64, f64)]) -> Result<CalibrationFactor, EstimateError> {
    if pairs.is_empty() {
        return Err(EstimateError::EmptyPairs);
    }
    for (i, &(actual, inferred)) in pairs.iter().enumerate() {
        if !actual.is_finite() || !inferred.is_finite() || actual < 0.0 || inferred < 0.0 {
            return Err(EstimateError::InvalidPair(i + 1));
        }
        if inferred == 0.0 {
            return Err(EstimateError::ZeroInferredDistance(i + 1));
        }
    }
    let actual: f64 = pairs.iter().map(|p| p.0).sum();
    let inferred: f64 = pairs.iter().map(|p| p.1).sum();
    Ok(CalibrationFactor {
        ratio: actual / inferred,
        n_pairs: pairs.len(),
        pair_ratios: pairs.iter().map(|(a, i)| a / i).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrationMethod {
    MacroWeighted,
    CalibratedDiary,
}

impl IntegrationMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            IntegrationMethod::MacroWeighted => "MacroWeighted",
            IntegrationMethod::CalibratedDiary => "CalibratedDiary",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Weighting {
    /// Inverse variance when every estimate has a positive variance, by
    /// contributing count otherwise.
    Auto,
    InverseVariance,
    ByN,
    Explicit(Vec<f64>),
}

impl Weighting {
    pub fn name(&self) -> &'static str {
        match self {
            Weighting::Auto => "auto",
            Weighting::InverseVariance => "inverse_variance",
            Weighting::ByN => "by_n",
            Weighting::Explicit(_) => "explicit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedEstimate {
    pub statistic: String,
    pub value: f64,
    pub variance: Option<f64>,
    /// Contributing estimates with their weights; weights sum to 1.
    pub components: Vec<(SourceEstimate, f64)>,
    pub method: IntegrationMethod,
    /// Weighting actually used (macro integration only).
    pub weighting: Option<Weighting>,
    pub calibration_ratio: Option<f64>,
}

impl IntegratedEstimate {
    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|(_, w)| *w).collect()
    }

    /// This estimate as a diary-side source estimate, for chaining a further
    /// calibration or feeding macro integration.
    pub fn as_source_estimate(&self, source: SourceTag) -> SourceEstimate {
        SourceEstimate {
            statistic: self.statistic.clone(),
            source,
            value: self.value,
            n: self.components.iter().map(|(e, _)| e.n).sum(),
            variance: self.variance,
        }
    }
}

/// Scales a diary estimate by the calibration ratio.
pub fn apply_calibration(
    diary_est: &SourceEstimate,
    f: &CalibrationFactor,
) -> Result<IntegratedEstimate, EstimateError> {
    if diary_est.source != SourceTag::Diary {
        return Err(EstimateError::SourceMismatch(diary_est.source));
    }
    Ok(IntegratedEstimate {
        statistic: diary_est.statistic.clone(),
        value: diary_est.value * f.ratio,
        variance: diary_est.variance.map(|v| v * f.ratio * f.ratio),
        components: vec![(diary_est.clone(), 1.0)],
        method: IntegrationMethod::CalibratedDiary,
        weighting: None,
        calibration_ratio: Some(f.ratio),
    })
}

/// Weighted mean of same-statistic estimates from different sources.
pub fn macro_integrate(
    estimates: &[SourceEstimate],
    weighting: &Weighting,
) -> Result<IntegratedEstimate, EstimateError> {
    let first = estimates.first().ok_or(EstimateError::NoEstimates)?;
    if let Some(other) = estimates.iter().find(|e| e.statistic != first.statistic) {
        return Err(EstimateError::MixedStatistics(
            first.statistic.clone(),
            other.statistic.clone(),
        ));
    }
    let positive_variance = |e: &SourceEstimate| e.variance.filter(|v| *v > 0.0);
    let resolved = match weighting {
        Weighting::Auto if estimates.iter().all(|e| positive_variance(e).is_some()) => {
            Weighting::InverseVariance
        }
        Weighting::Auto => Weighting::ByN,
        w => w.clone(),
    };
    let raw: Vec<f64> = match &resolved {
        Weighting::InverseVariance => estimates
            .iter()
            .map(|e| {
                positive_variance(e)
                    .map(|v| 1.0 / v)
                    .ok_or(EstimateError::MissingVariance(e.source))
            })
            .collect::<Result<_, _>>()?,
        Weighting::ByN => estimates.iter().map(|e| e.n as f64).collect(),
        Weighting::Explicit(w) => {
            if w.len() != estimates.len() {
                return Err(EstimateError::BadWeights(format!(
                    "{} weights for {} estimates",
                    w.len(),
                    estimates.len()
                )));
            }
            w.clone()
        }
        Weighting::Auto => unreachable!("resolved above"),
    };
    let total: f64 = raw.iter().sum();
    if raw.iter().any(|w| !w.is_finite() || *w < 0.0) || !(total > 0.0) {
        return Err(EstimateError::BadWeights(format!("{raw:?}")));
    }
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let value = estimates
        .iter()
        .zip(&weights)
        .map(|(e, w)| w * e.value)
        .sum();
    let variance = estimates
        .iter()
        .zip(&weights)
        .map(|(e, w)| e.variance.map(|v| w * w * v))
        .sum::<Option<f64>>();
    Ok(IntegratedEstimate {
        statistic: first.statistic.clone(),
        value,
        variance,
        components: estimates.iter().cloned().zip(weights).collect(),
        method: IntegrationMethod::MacroWeighted,
        weighting: Some(resolved),
        calibration_ratio: None,
    })
}

#[derive(Debug, Error)]
pub enum PairsError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("pairs row {row}: {reason}")]
    Row { row: usize, reason: String },
}

/// Reads `actual_m,inferred_m`.
pub fn read_pairs<R: io::Read>(reader: R) -> Result<Vec<(f64, f64)>, PairsError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let pos = |name: &str| header.iter().position(|h| h == name);
    let (Some(ca), Some(ci)) = (pos("actual_m"), pos("inferred_m")) else {
        return Err(PairsError::Row {
            row: 0,
            reason: "expected columns actual_m,inferred_m".into(),
        });
    };
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| rec.get(c).and_then(|s| s.parse::<f64>().ok());
        match (num(ca), num(ci)) {
            (Some(a), Some(b)) => out.push((a, b)),
            _ => {
                return Err(PairsError::Row {
                    row: i + 1,
                    reason: "not a pair of numbers".into(),
                })
            }
        }
    }
    Ok(out)
}

pub fn write_pairs<W: io::Write>(writer: W, pairs: &[(f64, f64)]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["actual_m", "inferred_m"])?;
    for (a, i) in pairs {
        wtr.write_record([format!("{a:.3}"), format!("{i:.3}")])?;
    }
    wtr.flush()?;
    Ok(())
}

/// A row of the estimate output.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimateRow {
    Source(SourceEstimate),
    Factor(CalibrationFactor),
    Integrated(IntegratedEstimate),
}

pub const ESTIMATE_HEADER: [&str; 6] = ["statistic", "source_or_method", "value", "n", "variance", "weights"];

fn num(x: f64) -> String {
    format!("{x:.6}")
}

/// Writes `statistic,source_or_method,value,n,variance,weights`. Weights are
/// `Source=w` pairs joined by `;`.
pub fn write_estimates<W: io::Write>(writer: W, rows: &[EstimateRow]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(ESTIMATE_HEADER)?;
    for row in rows {
        let rec: [String; 6] = match row {
            EstimateRow::Source(e) => [
                e.statistic.clone(),
                e.source.to_string(),
                num(e.value),
                e.n.to_string(),
                e.variance.map(num).unwrap_or_default(),
                String::new(),
            ],
            EstimateRow::Factor(f) => [
                "distance_ratio".into(),
                "CalibrationFactor".into(),
                num(f.ratio),
                f.n_pairs.to_string(),
                String::new(),
                String::new(),
            ],
            EstimateRow::Integrated(e) => [
                e.statistic.clone(),
                e.method.as_str().into(),
                num(e.value),
                e.components.iter().map(|(c, _)| c.n).sum::<usize>().to_string(),
                e.variance.map(num).unwrap_or_default(),
                e.components
                    .iter()
                    .map(|(c, w)| format!("{}={}", c.source, num(*w)))
                    .collect::<Vec<_>>()
                    .join(";"),
            ],
        };
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
