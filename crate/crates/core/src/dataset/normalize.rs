use serde::{Deserialize, Serialize};

use super::{SessionLog, CHANNELS, COMMAND_DIM, MARKER_DIM, SENSOR_DIM};
use crate::{Error, Result};

/// Per-channel affine map of the training range onto (-1, 1).
///
/// A channel that is constant over the training data is centred on its value
/// with unit span, so it maps to 0. Out-of-range values are not clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

const SENSOR_OFFSET: usize = 0;
const COMMAND_OFFSET: usize = SENSOR_DIM;
const MARKER_OFFSET: usize = SENSOR_DIM + COMMAND_DIM;

impl Normalizer {
    pub fn fit(train: &[SessionLog]) -> Result<Self> {
        if train.iter().all(SessionLog::is_empty) {
            return Err(Error::InsufficientData(
                "cannot fit a normalizer on empty training data".into(),
            ));
        }
        let mut min = vec![f64::INFINITY; CHANNELS];
        let mut max = vec![f64::NEG_INFINITY; CHANNELS];
        for log in train {
            for t in 0..log.len() {
                for (c, v) in log.channels(t).into_iter().enumerate() {
                    min[c] = min[c].min(v);
                    max[c] = max[c].max(v);
                }
            }
        }
        if min.iter().chain(&max).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training data"));
        }
        Ok(Self { min, max })
    }

    fn center_half_span(&self, c: usize) -> (f64, f64) {
        let span = self.max[c] - self.min[c];
        if span > 0.0 {
            (0.5 * (self.min[c] + self.max[c]), 0.5 * span)
        } else {
            (self.min[c], 0.5)
        }
    }

    /// Maps the fitted range exactly onto `[-1, 1]`.
    pub fn normalize(&self, channel: usize, value: f64) -> f64 {
        let span = self.max[channel] - self.min[channel];
        if span > 0.0 {
            2.0 * (value - self.min[channel]) / span - 1.0
        } else {
            (value - self.min[channel]) / 0.5
        }
    }

    pub fn denormalize(&self, channel: usize, value: f64) -> f64 {
        let (center, half) = self.center_half_span(channel);
        value * half + center
    }

    pub fn normalize_sensors(&self, s: &[f64; SENSOR_DIM]) -> [f64; SENSOR_DIM] {
        std::array::from_fn(|i| self.normalize(SENSOR_OFFSET + i, s[i]))
    }

    pub fn normalize_command(&self, u: &[f64; COMMAND_DIM]) -> [f64; COMMAND_DIM] {
        std::array::from_fn(|i| self.normalize(COMMAND_OFFSET + i, u[i]))
    }

    pub fn normalize_markers(&self, y: &[f64; MARKER_DIM]) -> [f64; MARKER_DIM] {
        std::array::from_fn(|i| self.normalize(MARKER_OFFSET + i, y[i]))
    }

    /// Back to millimetres. Slices must hold 27 marker coordinates.
    pub fn denormalize_markers(&self, y: &[f64]) -> [f64; MARKER_DIM] {
        std::array::from_fn(|i| self.denormalize(MARKER_OFFSET + i, y[i]))
    }

    /// Scale factors (half spans) of the marker channels, mm per normalized unit.
    pub fn marker_half_spans(&self) -> [f64; MARKER_DIM] {
        std::array::from_fn(|i| self.center_half_span(MARKER_OFFSET + i).1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{run_session, PlantConfig};
    use proptest::prelude::*;

    fn ranged(lo: f64, hi: f64) -> Normalizer {
        Normalizer {
            min: vec![lo; CHANNELS],
            max: vec![hi; CHANNELS],
        }
    }

    #[test]
    fn midpoint_maps_to_zero() {
        let n = ranged(0.0, 10.0);
        assert_eq!(n.normalize(0, 5.0), 0.0);
        assert_eq!(n.normalize(0, 0.0), -1.0);
        assert_eq!(n.normalize(0, 10.0), 1.0);
    }

    #[test]
    fn constant_channel_maps_to_zero() {
        let n = ranged(3.0, 3.0);
        assert_eq!(n.normalize(7, 3.0), 0.0);
        assert_eq!(n.denormalize(7, 0.0), 3.0);
    }

    #[test]
    fn out_of_range_passes_through() {
        let n = ranged(0.0, 10.0);
        assert_eq!(n.normalize(0, 20.0), 3.0);
        assert_eq!(n.normalize(0, -10.0), -3.0);
    }

    #[test]
    fn fitted_training_channels_in_unit_box() {
        let logs: Vec<_> = (0..2)
            .map(|s| run_session(&PlantConfig::default(), s, 200, 5).unwrap())
            .collect();
        let n = Normalizer::fit(&logs).unwrap();
        for log in &logs {
            for t in 0..log.len() {
                for (c, v) in log.channels(t).into_iter().enumerate() {
                    let x = n.normalize(c, v);
                    assert!((-1.0..=1.0).contains(&x), "channel {c}: {x}");
                }
            }
        }
    }

    #[test]
    fn empty_training_rejected() {
        assert!(Normalizer::fit(&[]).is_err());
        assert!(Normalizer::fit(&[SessionLog::default()]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(lo in -1e3f64..1e3, width in 0.0f64..1e3, x in -1e4f64..1e4) {
            let n = ranged(lo, lo + width);
            let back = n.denormalize(3, n.normalize(3, x));
            prop_assert!((back - x).abs() < 1e-9 * (1.0 + x.abs()));
        }
    }
}
