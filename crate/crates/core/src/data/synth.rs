//! Deterministic surrogate for plant data: a Lorenz-driven power level with
//! measurement noise and injected up/down ramps, plus a diurnal temperature.

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DataError, RampLabel, SampleRecord};

const SAMPLING_MINUTES: i64 = 10;
const MIN_LEN: usize = 64;

const LEVEL_LOW: f64 = 600.0;
const LEVEL_HIGH: f64 = 2400.0;
/// Watts per unit of the Lorenz x coordinate.
const LORENZ_GAIN: f64 = 20.0;
/// Lorenz time advanced per sample.
const LORENZ_DT: f64 = 0.01;
const NOISE_STD_W: f64 = 15.0;

const RAMP_STEPS: std::ops::RangeInclusive<usize> = 3..=6;
/// Watts per minute.
const RAMP_RATE: std::ops::Range<f64> = 22.0..30.0;
/// Quiet samples enforced after each ramp.
const RAMP_COOLDOWN: usize = 3;

/// One injected ramp: the level moves by `rate * sampling` watts at each of
/// samples `start + 1 ..= start + steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectedRamp {
    pub start: usize,
    pub steps: usize,
    pub direction: RampLabel,
    /// Watts per minute.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSeries {
    pub records: Vec<SampleRecord>,
    pub injections: Vec<InjectedRamp>,
}

struct Lorenz {
    state: [f64; 3],
}

impl Lorenz {
    fn derivative(s: [f64; 3]) -> [f64; 3] {
        let (sigma, rho, beta) = (10.0, 28.0, 8.0 / 3.0);
        [
            sigma * (s[1] - s[0]),
            s[0] * (rho - s[2]) - s[1],
            s[0] * s[1] - beta * s[2],
        ]
    }

    fn advance(&mut self, dt: f64) {
        let add = |s: [f64; 3], k: [f64; 3], h: f64| [s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2]];
        let s = self.state;
        let k1 = Self::derivative(s);
        let k2 = Self::derivative(add(s, k1, dt / 2.0));
        let k3 = Self::derivative(add(s, k2, dt / 2.0));
        let k4 = Self::derivative(add(s, k3, dt));
        for i in 0..3 {
            self.state[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Generates `n` samples starting 2015-01-01 00:00 at 10-minute cadence.
///
/// `ramp_rate` is the target fraction of instants that carry a ramp label
/// under the default ramp definition; ramps are started at random with a
/// per-sample probability scaled to hit it.
pub fn synth_series(seed: u64, n: usize, ramp_rate: f64) -> Result<SynthSeries, DataError> {
    if n < MIN_LEN {
        return Err(DataError::SeriesTooShort {
            len: n,
            needed: MIN_LEN,
        });
    }
    if !(0.0..1.0).contains(&ramp_rate) {
        return Err(DataError::InvalidConfig(format!(
            "ramp_rate must be in [0, 1), got {ramp_rate}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, NOISE_STD_W).expect("valid std");
    let temp_noise = Normal::new(0.0, 0.2).expect("valid std");

    let mut lorenz = Lorenz {
        state: [1.0 + rng.random::<f64>(), 1.0, 20.0],
    };
    for _ in 0..2000 {
        lorenz.advance(LORENZ_DT);
    }

    // Mean number of labeled instants per ramp is about steps - 0.5.
    let mean_steps = (*RAMP_STEPS.start() + *RAMP_STEPS.end()) as f64 / 2.0;
    let start_prob = ramp_rate / (mean_steps - 0.5);

    let t0 = NaiveDate::from_ymd_opt(2015, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date");
    let mut level = rng.random_range(1200.0..1800.0);
    let mut active: Option<(InjectedRamp, usize)> = None;
    let mut cooldown = 0usize;
    let mut injections = Vec::new();
    let mut records = Vec::with_capacity(n);
    let temp_phase = rng.random_range(0.0..std::f64::consts::TAU);

    for i in 0..n {
        match active.as_mut() {
            Some((ramp, done)) => {
                let sign = f64::from(ramp.direction.value());
                level += sign * ramp.rate * SAMPLING_MINUTES as f64;
                *done += 1;
                if *done == ramp.steps {
                    active = None;
                    cooldown = RAMP_COOLDOWN;
                }
            }
            None if cooldown > 0 => cooldown -= 1,
            None => {
                // Leave room for the ramp window before the series ends.
                if i + RAMP_STEPS.end() < n && rng.random::<f64>() < start_prob {
                    let steps = rng.random_range(RAMP_STEPS);
                    let rate = rng.random_range(RAMP_RATE);
                    let amplitude = rate * SAMPLING_MINUTES as f64 * steps as f64;
                    let mut direction = if rng.random::<bool>() {
                        RampLabel::Up
                    } else {
                        RampLabel::Down
                    };
                    if direction == RampLabel::Up && level + amplitude > LEVEL_HIGH {
                        direction = RampLabel::Down;
                    } else if direction == RampLabel::Down && level - amplitude < LEVEL_LOW {
                        direction = RampLabel::Up;
                    }
                    let ramp = InjectedRamp {
                        start: i,
                        steps,
                        direction,
                        rate,
                    };
                    injections.push(ramp);
                    active = Some((ramp, 0));
                }
            }
        }

        lorenz.advance(LORENZ_DT);
        let power = (level + LORENZ_GAIN * lorenz.state[0] + noise.sample(&mut rng)).max(0.0);

        let day = i as f64 * SAMPLING_MINUTES as f64 / 1440.0;
        let temperature = 8.0
            + 6.0 * (std::f64::consts::TAU * day + temp_phase).sin()
            + 3.0 * (std::f64::consts::TAU * day / 30.0).sin()
            + temp_noise.sample(&mut rng);

        let timestamp = t0 + Duration::minutes(SAMPLING_MINUTES * i as i64);
        records.push(SampleRecord::new(timestamp, power, temperature));
    }

    Ok(SynthSeries { records, injections })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{label_ramps, RampConfig};

    #[test]
    fn same_seed_same_series() {
        let a = synth_series(7, 500, 0.1).unwrap();
        let b = synth_series(7, 500, 0.1).unwrap();
        assert_eq!(a, b);
        let bits = |s: &SynthSeries| {
            s.records
                .iter()
                .map(|r| (r.power.to_bits(), r.temperature.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&synth_series(8, 500, 0.1).unwrap()));
    }

    #[test]
    fn no_ramps_without_injection() {
        for seed in 0..5 {
            let s = synth_series(seed, 3000, 0.0).unwrap();
            assert!(s.injections.is_empty());
            let labels = label_ramps(&s.records, &RampConfig::default()).unwrap();
            assert!(labels.iter().flatten().all(|l| *l == RampLabel::Flat), "seed {seed}");
        }
    }

    #[test]
    fn ramp_fraction_tracks_rate() {
        for seed in 0..5 {
            let s = synth_series(seed, 2000, 0.1).unwrap();
            let labels = label_ramps(&s.records, &RampConfig::default()).unwrap();
            let labeled: Vec<_> = labels.iter().flatten().collect();
            let frac = labeled.iter().filter(|l| l.is_ramp()).count() as f64 / labeled.len() as f64;
            assert!((0.05..=0.15).contains(&frac), "seed {seed}: fraction {frac}");
        }
    }

    #[test]
    fn injected_ramps_are_mostly_labeled_in_their_direction() {
        // The Lorenz component can occasionally swing by a few hundred watts
        // within one horizon and mask a short ramp.
        let s = synth_series(3, 2000, 0.1).unwrap();
        let labels = label_ramps(&s.records, &RampConfig::default()).unwrap();
        let hits = s
            .injections
            .iter()
            .filter(|r| labels[r.start] == Some(r.direction))
            .count();
        assert!(!s.injections.is_empty());
        assert!(
            hits as f64 >= 0.9 * s.injections.len() as f64,
            "{hits}/{}",
            s.injections.len()
        );
    }

    #[test]
    fn rejects_short_series() {
        assert!(synth_series(0, 63, 0.1).is_err());
        assert!(synth_series(0, 64, 0.1).is_ok());
    }
}
