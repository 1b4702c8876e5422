use thiserror::Error;

use crate::diary::TransportMode;
use crate::stops::TripSegment;
use crate::trace::median_speed_mps;

/// Assigns a primary transport method to a trip.
pub trait ModeClassifier: Send + Sync {
    fn classify(&self, trip: &TripSegment) -> TransportMode;
}

/// Median-speed bands: a trip is labeled with the first band whose upper
/// bound exceeds its median speed, or `top` when none does.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeThresholds {
    bands: Vec<(f64, TransportMode)>,
    top: TransportMode,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThresholdError {
    #[error("speed breakpoints must be finite and strictly increasing")]
    NotIncreasing,
    #[error("expected {expected} labels for {breakpoints} breakpoints, got {got}")]
    LabelCount {
        breakpoints: usize,
        expected: usize,
        got: usize,
    },
}

impl ModeThresholds {
    /// `labels` has one more element than `breakpoints`; the last label
    /// applies at or above the final breakpoint.
    pub fn new(breakpoints: &[f64], labels: &[TransportMode]) -> Result<Self, ThresholdError> {
        if labels.len() != breakpoints.len() + 1 {
            return Err(ThresholdError::LabelCount {
                breakpoints: breakpoints.len(),
                expected: breakpoints.len() + 1,
                got: labels.len(),
            });
        }
        if breakpoints.iter().any(|b| !b.is_finite())
            || breakpoints.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(ThresholdError::NotIncreasing);
        }
        Ok(ModeThresholds {
            bands: breakpoints.iter().copied().zip(labels.iter().copied()).collect(),
            top: labels[labels.len() - 1],
        })
    }

    pub fn label_for_speed(&self, speed_mps: f64) -> TransportMode {
        self.bands
            .iter()
            .find(|(upper, _)| speed_mps < *upper)
            .map_or(self.top, |(_, m)| *m)
    }
}

impl Default for ModeThresholds {
    fn default() -> Self {
        use TransportMode::*;
        ModeThresholds::new(&[2.0, 6.0, 35.0], &[Walk, Bike, Car, Train]).expect("valid defaults")
    }
}

impl ModeClassifier for ModeThresholds {
    fn classify(&self, trip: &TripSegment) -> TransportMode {
        infer_mode(trip, self)
    }
}

pub fn infer_mode(trip: &TripSegment, th: &ModeThresholds) -> TransportMode {
    match median_speed_mps(&trip.points) {
        Ok(speed) => th.label_for_speed(speed),
        Err(_) => TransportMode::Unknown,
    }
}
