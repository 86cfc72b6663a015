//! Acoustic and paralinguistic features: F0 tracking, jitter/shimmer,
//! utterance-level profiles and their binning into textual descriptors.
//!
//! All routines are generic over [`Sample`] so that `f32` and `f64`
//! pipelines share one implementation.

mod calibrate;
mod f0;
mod perturbation;
mod profile;
mod wav;

pub use calibrate::{calibrate, describe, Calibration, DescriptorSet, Feature, FeatureBins, Level};
pub use f0::{extract_f0, F0Frame, F0Params, F0Track};
pub use perturbation::{jitter_shimmer, Perturbation};
pub use profile::{percentile, profile, word_count, Profile, ENERGY_FLOOR_DB};
pub use wav::{read_wav, write_wav};

use crate::scalar::Sample;

#[derive(Debug, thiserror::Error)]
pub enum AcousticsError {
    #[error("audio is empty")]
    Empty,
    #[error("expected mono audio, got {0} channels")]
    NotMono(u16),
    #[error("sample rate {0} Hz is below the 8 kHz minimum")]
    SampleRate(u32),
    #[error("unsupported WAV format: {0}")]
    Format(String),
    #[error("wav decode failed: {0}")]
    Wav(#[from] hound::Error),
    #[error("non-positive duration {0}")]
    Duration(f64),
}

/// Decoded PCM audio, normalized to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Audio<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
    pub channels: u16,
}

impl<T: Sample> Audio<T> {
    pub fn mono(samples: Vec<T>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
            channels: 1,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / (self.sample_rate as f64 * self.channels.max(1) as f64)
    }

    /// Multiplies every sample by `gain`.
    pub fn scaled(&self, gain: T) -> Self {
        Self {
            samples: self.samples.iter().map(|&s| s * gain).collect(),
            ..self.clone()
        }
    }

    pub(crate) fn check_mono(&self) -> Result<(), AcousticsError> {
        if self.channels != 1 {
            return Err(AcousticsError::NotMono(self.channels));
        }
        if self.sample_rate < 8000 {
            return Err(AcousticsError::SampleRate(self.sample_rate));
        }
        if self.samples.is_empty() {
            return Err(AcousticsError::Empty);
        }
        Ok(())
    }
}

/// Synthetic test signals shared by unit and integration tests.
pub mod synth {
    use super::Audio;
    use crate::scalar::Sample;
    use std::f64::consts::PI;

    pub fn sine<T: Sample>(freq_hz: f64, amplitude: f64, seconds: f64, sample_rate: u32) -> Audio<T> {
        let n = (seconds * sample_rate as f64).round() as usize;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / sample_rate as f64;
                T::lit(amplitude * (2.0 * PI * freq_hz * t).sin())
            })
            .collect();
        Audio::mono(samples, sample_rate)
    }

    /// Periodic train of half-sine pulses, `period` samples apart.
    pub fn pulse_train<T: Sample>(period: usize, width: usize, seconds: f64, sample_rate: u32) -> Audio<T> {
        let n = (seconds * sample_rate as f64).round() as usize;
        let samples = (0..n)
            .map(|i| {
                let j = i % period;
                if j < width {
                    T::lit((PI * j as f64 / width as f64).sin())
                } else {
                    T::zero()
                }
            })
            .collect();
        Audio::mono(samples, sample_rate)
    }

    /// Sine whose cycle lengths alternate between `base·(1+depth)` and
    /// `base·(1−depth)` seconds; each cycle starts at a positive-going zero.
    pub fn alternating_period_sine<T: Sample>(
        freq_hz: f64,
        depth: f64,
        seconds: f64,
        sample_rate: u32,
    ) -> Audio<T> {
        let n = (seconds * sample_rate as f64).round() as usize;
        let base = 1.0 / freq_hz;
        let mut samples = Vec::with_capacity(n);
        let (mut cycle_start, mut cycle) = (0.0f64, 0usize);
        let len = |c: usize| base * if c % 2 == 0 { 1.0 + depth } else { 1.0 - depth };
        for i in 0..n {
            let t = i as f64 / sample_rate as f64;
            while t >= cycle_start + len(cycle) {
                cycle_start += len(cycle);
                cycle += 1;
            }
            let phase = (t - cycle_start) / len(cycle);
            samples.push(T::lit((2.0 * PI * phase).sin()));
        }
        Audio::mono(samples, sample_rate)
    }

    pub fn silence<T: Sample>(seconds: f64, sample_rate: u32) -> Audio<T> {
        let n = (seconds * sample_rate as f64).round() as usize;
        Audio::mono(vec![T::zero(); n], sample_rate)
    }
}
