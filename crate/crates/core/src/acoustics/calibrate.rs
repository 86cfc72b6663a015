//! Per-corpus tertile binning of profile features into low/medium/high.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{percentile, Profile};
use crate::corpus::Gender;
use crate::scalar::Sample;

const MIN_VALUES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Energy,
    Pitch,
    PitchRange,
    SpeakingRate,
    Jitter,
    Shimmer,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::Energy,
        Feature::Pitch,
        Feature::PitchRange,
        Feature::SpeakingRate,
        Feature::Jitter,
        Feature::Shimmer,
    ];

    /// Energy, pitch and speaking rate only.
    pub const BASIC: [Feature; 3] = [Feature::Energy, Feature::Pitch, Feature::SpeakingRate];

    pub fn label(self) -> &'static str {
        match self {
            Feature::Energy => "energy",
            Feature::Pitch => "pitch",
            Feature::PitchRange => "pitch range",
            Feature::SpeakingRate => "speaking rate",
            Feature::Jitter => "jitter",
            Feature::Shimmer => "shimmer",
        }
    }

    pub fn value<T: Sample>(self, p: &Profile<T>) -> Option<T> {
        match self {
            Feature::Energy => Some(p.energy_db),
            Feature::Pitch => p.f0_mean_hz,
            Feature::PitchRange => p.f0_range_hz,
            Feature::SpeakingRate => Some(p.speaking_rate_wps),
            Feature::Jitter => p.jitter_pct,
            Feature::Shimmer => p.shimmer_pct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    Medium,
    High,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Low => "low",
            Level::Medium => "medium",
            Level::High => "high",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", bound = "T: Sample")]
pub enum FeatureBins<T> {
    /// `v <= lower` is low, `v <= upper` medium, otherwise high.
    Tertiles { lower: T, upper: T },
    /// All calibration values were equal.
    Degenerate,
}

impl<T: Sample> FeatureBins<T> {
    pub fn level(&self, v: T) -> Level {
        match *self {
            FeatureBins::Degenerate => Level::Medium,
            FeatureBins::Tertiles { lower, upper } => {
                if v <= lower {
                    Level::Low
                } else if v <= upper {
                    Level::Medium
                } else {
                    Level::High
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Sample")]
pub struct Calibration<T> {
    pub bins: BTreeMap<Feature, FeatureBins<T>>,
    /// Features with fewer than three observations.
    pub excluded: Vec<Feature>,
}

/// Computes 33.3/66.7 percentile boundaries for every feature.
pub fn calibrate<T: Sample>(profiles: &[Profile<T>]) -> Calibration<T> {
    let mut bins = BTreeMap::new();
    let mut excluded = Vec::new();
    for feature in Feature::ALL {
        let mut values: Vec<T> = profiles.iter().filter_map(|p| feature.value(p)).collect();
        if values.len() < MIN_VALUES {
            log::warn!(
                "feature {} has {} values (< {MIN_VALUES}); excluded from descriptors",
                feature.label(),
                values.len()
            );
            excluded.push(feature);
            continue;
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite feature values"));
        let entry = if values[0] == values[values.len() - 1] {
            FeatureBins::Degenerate
        } else {
            FeatureBins::Tertiles {
                lower: percentile(&values, 100.0 / 3.0),
                upper: percentile(&values, 200.0 / 3.0),
            }
        };
        bins.insert(feature, entry);
    }
    Calibration { bins, excluded }
}

/// Binned descriptors for one utterance, in [`Feature::ALL`] order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptorSet {
    pub levels: Vec<(Feature, Level)>,
    pub gender: Gender,
}

impl DescriptorSet {
    pub fn level(&self, feature: Feature) -> Option<Level> {
        self.levels.iter().find(|(f, _)| *f == feature).map(|&(_, l)| l)
    }

    /// `"energy: high, pitch: low, ..."` restricted to `features`.
    pub fn render(&self, features: &[Feature]) -> String {
        self.levels
            .iter()
            .filter(|(f, _)| features.contains(f))
            .map(|(f, l)| format!("{}: {l}", f.label()))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Maps each present, calibrated feature onto its level.
pub fn describe<T: Sample>(profile: &Profile<T>, calibration: &Calibration<T>) -> DescriptorSet {
    let levels = Feature::ALL
        .iter()
        .filter_map(|&f| {
            let bins = calibration.bins.get(&f)?;
            let v = f.value(profile)?;
            Some((f, bins.level(v)))
        })
        .collect();
    DescriptorSet {
        levels,
        gender: profile.gender,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn with_energy(v: f64) -> Profile<f64> {
        Profile {
            energy_db: v,
            f0_mean_hz: None,
            f0_range_hz: None,
            speaking_rate_wps: 1.0,
            jitter_pct: None,
            shimmer_pct: None,
            gender: Gender::Male,
        }
    }

    fn energy_bins(values: &[f64]) -> FeatureBins<f64> {
        let profiles: Vec<_> = values.iter().map(|&v| with_energy(v)).collect();
        calibrate(&profiles).bins[&Feature::Energy]
    }

    #[test]
    fn three_values_land_in_distinct_bins() {
        let bins = energy_bins(&[3.0, 1.0, 2.0]);
        assert_eq!(bins.level(1.0), Level::Low);
        assert_eq!(bins.level(2.0), Level::Medium);
        assert_eq!(bins.level(3.0), Level::High);
    }

    #[test]
    fn uniform_one_to_hundred_boundaries() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        match energy_bins(&values) {
            FeatureBins::Tertiles { lower, upper } => {
                assert!((lower - 34.0).abs() < 1e-9, "{lower}");
                assert!((upper - 67.0).abs() < 1e-9, "{upper}");
            }
            b => panic!("{b:?}"),
        }
    }

    #[test]
    fn equal_values_are_degenerate_medium() {
        let bins = energy_bins(&[5.0; 7]);
        assert_eq!(bins, FeatureBins::Degenerate);
        assert_eq!(bins.level(-100.0), Level::Medium);
        assert_eq!(bins.level(5.0), Level::Medium);
    }

    #[test]
    fn boundary_ties_go_to_lower_bin() {
        let bins = FeatureBins::Tertiles {
            lower: 1.0,
            upper: 2.0,
        };
        assert_eq!(bins.level(1.0), Level::Low);
        assert_eq!(bins.level(2.0), Level::Medium);
        assert_eq!(bins.level(0.5), Level::Low);
        assert_eq!(bins.level(2.5), Level::High);
    }

    #[test]
    fn sparse_features_are_excluded() {
        let cal = calibrate(&[with_energy(1.0), with_energy(2.0), with_energy(3.0)]);
        assert!(cal.excluded.contains(&Feature::Jitter));
        assert!(cal.excluded.contains(&Feature::Pitch));
        assert!(!cal.excluded.contains(&Feature::Energy));
        let d = describe(&with_energy(2.0), &cal);
        assert_eq!(d.level(Feature::Energy), Some(Level::Medium));
        assert_eq!(d.level(Feature::Jitter), None);
        assert_eq!(d.render(&Feature::ALL), "energy: medium, speaking rate: medium");
    }

    #[test]
    fn calibration_is_order_independent() {
        let a = energy_bins(&[4.0, 1.0, 9.0, 2.0, 7.0]);
        let b = energy_bins(&[9.0, 7.0, 4.0, 2.0, 1.0]);
        assert_eq!(a, b);
    }

    #[test]
    fn calibration_roundtrips_through_json() {
        let cal = calibrate(&[with_energy(1.0), with_energy(2.0), with_energy(3.0)]);
        let text = serde_json::to_string(&cal).unwrap();
        let back: Calibration<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(cal, back);
    }

    proptest! {
        #[test]
        fn describe_is_monotone(values in prop::collection::vec(-50.0f64..50.0, 3..40),
                                a in -60.0f64..60.0, b in -60.0f64..60.0) {
            let bins = energy_bins(&values);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(bins.level(lo) <= bins.level(hi));
        }
    }
}
