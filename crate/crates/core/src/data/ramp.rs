use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::{DataError, SampleRecord};

/// Ramp definition: a ramp starts at `t` when the power change over the next
/// `delta_t_minutes` exceeds `threshold_h` watts per minute in magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RampConfig {
    pub sampling_minutes: u32,
    pub delta_t_minutes: u32,
    /// Watts per minute.
    pub threshold_h: f64,
}

impl Default for RampConfig {
    fn default() -> Self {
        Self {
            sampling_minutes: 10,
            delta_t_minutes: 30,
            threshold_h: 16.0,
        }
    }
}

impl RampConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.sampling_minutes == 0 {
            return Err(DataError::InvalidConfig("sampling_minutes must be positive".into()));
        }
        if self.delta_t_minutes == 0 || !self.delta_t_minutes.is_multiple_of(self.sampling_minutes) {
            return Err(DataError::InvalidConfig(format!(
                "delta_t_minutes ({}) must be a positive multiple of sampling_minutes ({})",
                self.delta_t_minutes, self.sampling_minutes
            )));
        }
        if !(self.threshold_h > 0.0 && self.threshold_h.is_finite()) {
            return Err(DataError::InvalidConfig(format!(
                "threshold_h must be positive, got {}",
                self.threshold_h
            )));
        }
        Ok(())
    }

    /// Number of samples spanned by Δt.
    pub fn horizon_steps(&self) -> usize {
        (self.delta_t_minutes / self.sampling_minutes) as usize
    }
}

/// Ramp class of one labeled instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RampLabel {
    Down,
    Flat,
    Up,
}

impl RampLabel {
    /// Class order used by the classifier head: `[down, none, up]`.
    pub const CLASS_ORDER: [RampLabel; 3] = [RampLabel::Down, RampLabel::Flat, RampLabel::Up];

    pub fn value(self) -> i8 {
        match self {
            RampLabel::Down => -1,
            RampLabel::Flat => 0,
            RampLabel::Up => 1,
        }
    }

    pub fn from_value(v: i8) -> Option<Self> {
        match v {
            -1 => Some(RampLabel::Down),
            0 => Some(RampLabel::Flat),
            1 => Some(RampLabel::Up),
            _ => None,
        }
    }

    pub fn class_index(self) -> usize {
        (self.value() + 1) as usize
    }

    pub fn from_class_index(i: usize) -> Option<Self> {
        Self::CLASS_ORDER.get(i).copied()
    }

    pub fn class_name(self) -> &'static str {
        match self {
            RampLabel::Down => "down",
            RampLabel::Flat => "none",
            RampLabel::Up => "up",
        }
    }

    pub fn is_ramp(self) -> bool {
        self != RampLabel::Flat
    }
}

/// Labels each instant by the signed rate over the following Δt.
///
/// The last `Δt / sampling` instants, and any instant whose horizon crosses a
/// gap in the series, are left unlabeled (`None`).
pub fn label_ramps(records: &[SampleRecord], config: &RampConfig) -> Result<Vec<Option<RampLabel>>, DataError> {
    config.validate()?;
    let k = config.horizon_steps();
    if records.len() < k + 1 {
        return Err(DataError::SeriesTooShort {
            len: records.len(),
            needed: k + 1,
        });
    }
    let horizon = Duration::minutes(i64::from(config.delta_t_minutes));
    let dt = f64::from(config.delta_t_minutes);

    let labels = (0..records.len())
        .map(|t| {
            let future = records.get(t + k)?;
            if future.timestamp - records[t].timestamp != horizon {
                return None;
            }
            let rate = (future.power - records[t].power) / dt;
            Some(if rate > config.threshold_h {
                RampLabel::Up
            } else if rate < -config.threshold_h {
                RampLabel::Down
            } else {
                RampLabel::Flat
            })
        })
        .collect();
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TIMESTAMP_FORMAT;
    use chrono::NaiveDateTime;
    use proptest::prelude::*;

    fn series(powers: &[f64]) -> Vec<SampleRecord> {
        let t0 = NaiveDateTime::parse_from_str("2015-01-01 00:00", TIMESTAMP_FORMAT).unwrap();
        powers
            .iter()
            .enumerate()
            .map(|(i, &p)| SampleRecord::new(t0 + Duration::minutes(10 * i as i64), p, 10.0))
            .collect()
    }

    #[test]
    fn config_validation() {
        assert!(RampConfig::default().validate().is_ok());
        assert_eq!(RampConfig::default().horizon_steps(), 3);
        let bad = RampConfig {
            delta_t_minutes: 25,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = RampConfig {
            threshold_h: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn worked_examples() {
        let cfg = RampConfig::default();
        // 600 W over 30 min = 20 W/min > 16.
        let labels = label_ramps(&series(&[0.0, 0.0, 0.0, 600.0]), &cfg).unwrap();
        assert_eq!(labels, vec![Some(RampLabel::Up), None, None, None]);

        let labels = label_ramps(&series(&[5.0, 1.0, 2.0, 5.0]), &cfg).unwrap();
        assert_eq!(labels[0], Some(RampLabel::Flat));

        // |878.2 - 1673.7| / 30 = 26.5 W/min, falling.
        let labels = label_ramps(&series(&[1673.7, 0.0, 0.0, 878.2]), &cfg).unwrap();
        assert_eq!(labels[0], Some(RampLabel::Down));
    }

    #[test]
    fn threshold_is_strict() {
        let labels = label_ramps(&series(&[0.0, 0.0, 0.0, 480.0]), &RampConfig::default()).unwrap();
        assert_eq!(labels[0], Some(RampLabel::Flat));
    }

    #[test]
    fn short_series_and_gaps() {
        assert!(matches!(
            label_ramps(&series(&[1.0, 2.0, 3.0]), &RampConfig::default()),
            Err(DataError::SeriesTooShort { len: 3, needed: 4 })
        ));
        let mut recs = series(&[0.0; 6]);
        for r in &mut recs[4..] {
            r.timestamp += Duration::minutes(10);
        }
        let labels = label_ramps(&recs, &RampConfig::default()).unwrap();
        assert_eq!(labels[0], Some(RampLabel::Flat));
        assert_eq!(labels[1], None);
        assert_eq!(labels[2], None);
    }

    #[test]
    fn label_value_round_trip() {
        for (i, label) in RampLabel::CLASS_ORDER.into_iter().enumerate() {
            assert_eq!(label.class_index(), i);
            assert_eq!(RampLabel::from_value(label.value()), Some(label));
        }
        assert_eq!(RampLabel::from_value(2), None);
    }

    proptest! {
        #[test]
        fn labels_match_direct_rate_check(powers in prop::collection::vec(0.0f64..3000.0, 4..60)) {
            let cfg = RampConfig::default();
            let labels = label_ramps(&series(&powers), &cfg).unwrap();
            prop_assert_eq!(labels.len(), powers.len());
            for (t, label) in labels.iter().enumerate() {
                if t + 3 >= powers.len() {
                    prop_assert!(label.is_none());
                    continue;
                }
                let diff = powers[t + 3] - powers[t];
                let expected = if diff.abs() / 30.0 > 16.0 {
                    if diff > 0.0 { 1 } else { -1 }
                } else {
                    0
                };
                prop_assert_eq!(label.map(RampLabel::value), Some(expected));
            }
        }
    }
}
