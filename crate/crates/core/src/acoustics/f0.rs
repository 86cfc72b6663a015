//! Frame-wise normalized-autocorrelation F0 tracker.

use serde::{Deserialize, Serialize};

use super::{AcousticsError, Audio};
use crate::scalar::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F0Params {
    pub frame_s: f64,
    pub hop_s: f64,
    pub min_hz: f64,
    pub max_hz: f64,
    /// Frames whose normalized autocorrelation peak falls below this are unvoiced.
    pub voicing_threshold: f64,
    /// Earliest peak reaching this fraction of the best peak wins (octave guard).
    pub octave_ratio: f64,
}

impl Default for F0Params {
    fn default() -> Self {
        Self {
            frame_s: 0.040,
            hop_s: 0.010,
            min_hz: 50.0,
            max_hz: 600.0,
            voicing_threshold: 0.3,
            octave_ratio: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F0Frame<T> {
    /// Frame centre in seconds.
    pub time_s: T,
    /// `None` for unvoiced frames.
    pub f0_hz: Option<T>,
    /// Normalized autocorrelation at the selected lag.
    pub strength: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F0Track<T> {
    pub frames: Vec<F0Frame<T>>,
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl<T: Sample> F0Track<T> {
    pub fn voiced(&self) -> impl Iterator<Item = T> + '_ {
        self.frames.iter().filter_map(|f| f.f0_hz)
    }

    pub fn voiced_count(&self) -> usize {
        self.voiced().count()
    }

    /// Frame whose centre is nearest to sample position `pos`.
    pub fn frame_at(&self, pos: f64) -> Option<&F0Frame<T>> {
        if self.frames.is_empty() {
            return None;
        }
        let centre0 = self.frame_len as f64 / 2.0;
        let k = ((pos - centre0) / self.hop as f64).round();
        let k = k.clamp(0.0, (self.frames.len() - 1) as f64) as usize;
        self.frames.get(k)
    }
}

/// Estimates F0 per frame.
pub fn extract_f0<T: Sample>(audio: &Audio<T>, params: &F0Params) -> Result<F0Track<T>, AcousticsError> {
    audio.check_mono()?;
    let sr = audio.sample_rate as f64;
    let frame_len = (params.frame_s * sr).round() as usize;
    let hop = ((params.hop_s * sr).round() as usize).max(1);
    let min_lag = ((sr / params.max_hz).floor() as usize).max(2);
    let max_lag = ((sr / params.min_hz).ceil() as usize).min(frame_len.saturating_sub(2));

    let n = audio.samples.len();
    let n_frames = if n >= frame_len { 1 + (n - frame_len) / hop } else { 1 };

    let mut frame = vec![T::zero(); frame_len];
    let mut prefix = vec![T::zero(); frame_len + 1];
    let mut ac = vec![T::zero(); max_lag + 2];
    let mut frames = Vec::with_capacity(n_frames);

    for k in 0..n_frames {
        let start = k * hop;
        for (i, slot) in frame.iter_mut().enumerate() {
            *slot = audio.samples.get(start + i).copied().unwrap_or_else(T::zero);
        }
        let mean = frame.iter().copied().sum::<T>() / T::from_usize_lossy(frame_len);
        for s in frame.iter_mut() {
            *s = *s - mean;
        }
        let time_s = T::lit((start as f64 + frame_len as f64 / 2.0) / sr);
        let unvoiced = F0Frame {
            time_s,
            f0_hz: None,
            strength: T::zero(),
        };

        for i in 0..frame_len {
            prefix[i + 1] = prefix[i] + frame[i] * frame[i];
        }
        let total = prefix[frame_len];
        if total <= T::min_positive_value() || min_lag + 1 > max_lag {
            frames.push(unvoiced);
            continue;
        }

        for lag in (min_lag - 1)..=(max_lag + 1).min(frame_len - 1) {
            let m = frame_len - lag;
            let cross: T = frame[..m].iter().zip(&frame[lag..]).map(|(&a, &b)| a * b).sum();
            let e1 = prefix[m];
            let e2 = total - prefix[lag];
            let denom = (e1 * e2).sqrt();
            ac[lag] = if denom > T::zero() { cross / denom } else { T::zero() };
        }

        // interior local maxima within the search band
        let peaks: Vec<usize> = (min_lag..=max_lag)
            .filter(|&l| ac[l] > ac[l - 1] && ac[l] >= ac[l + 1])
            .collect();
        let Some(best) = peaks.iter().map(|&l| ac[l]).fold(None, |acc: Option<T>, v| {
            Some(acc.map_or(v, |a| a.max(v)))
        }) else {
            frames.push(unvoiced);
            continue;
        };
        let cutoff = best * T::lit(params.octave_ratio);
        let lag = *peaks.iter().find(|&&l| ac[l] >= cutoff).expect("best peak qualifies");
        let strength = ac[lag];
        if strength < T::lit(params.voicing_threshold) {
            frames.push(F0Frame {
                strength,
                ..unvoiced
            });
            continue;
        }

        let (a, b, c) = (ac[lag - 1], ac[lag], ac[lag + 1]);
        let curvature = a - b - b + c;
        let delta = if curvature < T::zero() {
            T::lit(0.5) * (a - c) / curvature
        } else {
            T::zero()
        };
        let refined = T::from_usize_lossy(lag) + delta;
        let f0 = T::lit(sr) / refined;
        let voiced = f0 >= T::lit(params.min_hz) && f0 <= T::lit(params.max_hz);
        frames.push(F0Frame {
            time_s,
            f0_hz: voiced.then_some(f0),
            strength,
        });
    }

    Ok(F0Track {
        frames,
        frame_len,
        hop,
        sample_rate: audio.sample_rate,
    })
}
