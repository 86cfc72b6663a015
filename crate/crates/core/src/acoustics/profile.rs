use serde::{Deserialize, Serialize};

use super::{extract_f0, jitter_shimmer, AcousticsError, Audio, F0Params};
use crate::corpus::{Gender, Utterance};
use crate::scalar::Sample;

/// Level reported for digital silence.
pub const ENERGY_FLOOR_DB: f64 = -120.0;

/// Utterance-level acoustic summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Sample")]
pub struct Profile<T> {
    /// RMS level in dB relative to full scale.
    pub energy_db: T,
    pub f0_mean_hz: Option<T>,
    /// 95th minus 5th percentile of voiced F0.
    pub f0_range_hz: Option<T>,
    pub speaking_rate_wps: T,
    pub jitter_pct: Option<T>,
    pub shimmer_pct: Option<T>,
    pub gender: Gender,
}

/// Whitespace-delimited token count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Linear-interpolation percentile of an ascending slice, `p` in [0, 100].
pub fn percentile<T: Sample>(sorted: &[T], p: f64) -> T {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let rank = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = T::lit(rank - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn rms_db<T: Sample>(samples: &[T]) -> T {
    let power = samples.iter().map(|&s| s * s).sum::<T>() / T::from_usize_lossy(samples.len());
    if power <= T::zero() {
        return T::lit(ENERGY_FLOOR_DB);
    }
    // 10·log10(power) == 20·log10(rms)
    (T::lit(10.0) * power.log10()).max(T::lit(ENERGY_FLOOR_DB))
}

/// Builds the acoustic profile of one utterance.
///
/// Speaking rate uses `transcript_for_rate` over the manifest duration.
pub fn profile<T: Sample>(
    utterance: &Utterance,
    audio: &Audio<T>,
    transcript_for_rate: &str,
    params: &F0Params,
) -> Result<Profile<T>, AcousticsError> {
    if !(utterance.duration_s > 0.0) {
        return Err(AcousticsError::Duration(utterance.duration_s));
    }
    let track = extract_f0(audio, params)?;
    let perturbation = jitter_shimmer(audio, &track)?;

    let mut voiced: Vec<T> = track.voiced().collect();
    voiced.sort_by(|a, b| a.partial_cmp(b).expect("finite f0"));
    let (f0_mean_hz, f0_range_hz) = if voiced.is_empty() {
        (None, None)
    } else {
        let mean = voiced.iter().copied().sum::<T>() / T::from_usize_lossy(voiced.len());
        let range = percentile(&voiced, 95.0) - percentile(&voiced, 5.0);
        (Some(mean), Some(range.max(T::zero())))
    };

    Ok(Profile {
        energy_db: rms_db(&audio.samples),
        f0_mean_hz,
        f0_range_hz,
        speaking_rate_wps: T::lit(word_count(transcript_for_rate) as f64 / utterance.duration_s),
        jitter_pct: perturbation.jitter_pct,
        shimmer_pct: perturbation.shimmer_pct,
        gender: utterance.speaker_gender,
    })
}
