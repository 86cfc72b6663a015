//! Cycle-level perturbation measures (local jitter and local shimmer).
//!
//! Glottal cycles are marked at positive-going zero crossings of the
//! DC-removed signal. From each mark the next one is the crossing nearest to
//! one local F0 period ahead, within ±30%. Marks only chain through voiced
//! frames; a gap ends the chain.

use serde::{Deserialize, Serialize};

use super::{AcousticsError, Audio, F0Track};
use crate::scalar::Sample;

/// Minimum number of consecutive periods for a chain to count.
const MIN_PERIODS: usize = 3;
const SEARCH_TOLERANCE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation<T> {
    /// `100 · mean|T_i − T_{i+1}| / mean(T_i)`, absent with too few periods.
    pub jitter_pct: Option<T>,
    /// Same over per-period peak amplitudes.
    pub shimmer_pct: Option<T>,
    pub periods: usize,
}

/// Positive-going zero crossings at fractional sample positions.
fn rising_crossings<T: Sample>(y: &[T]) -> Vec<f64> {
    y.windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] < T::zero() && w[1] >= T::zero())
        .map(|(i, w)| {
            let (a, b) = (w[0].to_f64_lossy(), w[1].to_f64_lossy());
            i as f64 + a / (a - b)
        })
        .collect()
}

/// Parabolically interpolated peak of |y| between two marks.
fn peak_amplitude<T: Sample>(y: &[T], from: f64, to: f64) -> f64 {
    let lo = from.ceil() as usize;
    let hi = (to.floor() as usize).min(y.len() - 1);
    if lo > hi {
        return 0.0;
    }
    let (p, b) = (lo..=hi)
        .map(|i| (i, y[i].abs().to_f64_lossy()))
        .fold((lo, f64::MIN), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    if p == 0 || p + 1 >= y.len() {
        return b;
    }
    let a = y[p - 1].abs().to_f64_lossy();
    let c = y[p + 1].abs().to_f64_lossy();
    let curvature = a - 2.0 * b + c;
    if curvature >= 0.0 {
        return b;
    }
    let delta = 0.5 * (a - c) / curvature;
    b - 0.25 * (a - c) * delta
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn local_perturbation(chains: &[Vec<f64>]) -> Option<f64> {
    let mut diffs = Vec::new();
    let mut values = Vec::new();
    for c in chains {
        values.extend_from_slice(c);
        diffs.extend(c.windows(2).map(|w| (w[0] - w[1]).abs()));
    }
    if values.is_empty() || diffs.is_empty() {
        return None;
    }
    let m = mean(&values);
    (m > 0.0).then(|| 100.0 * mean(&diffs) / m)
}

/// Local jitter and shimmer over voiced stretches of `audio`.
pub fn jitter_shimmer<T: Sample>(audio: &Audio<T>, track: &F0Track<T>) -> Result<Perturbation<T>, AcousticsError> {
    audio.check_mono()?;
    let sr = audio.sample_rate as f64;
    let dc = audio.samples.iter().copied().sum::<T>() / T::from_usize_lossy(audio.samples.len());
    let y: Vec<T> = audio.samples.iter().map(|&s| s - dc).collect();
    let crossings = rising_crossings(&y);
    let local_period = |pos: f64| -> Option<f64> {
        track
            .frame_at(pos)
            .and_then(|f| f.f0_hz)
            .map(|f0| sr / f0.to_f64_lossy())
    };

    let mut chains: Vec<Vec<f64>> = Vec::new();
    let mut i = 0;
    while i < crossings.len() {
        if local_period(crossings[i]).is_none() {
            i += 1;
            continue;
        }
        let mut marks = vec![crossings[i]];
        let mut cur = i;
        while let Some(period) = local_period(crossings[cur]) {
            let expected = crossings[cur] + period;
            let lo = crossings[cur] + (1.0 - SEARCH_TOLERANCE) * period;
            let hi = crossings[cur] + (1.0 + SEARCH_TOLERANCE) * period;
            let next = (cur + 1..crossings.len())
                .take_while(|&j| crossings[j] <= hi)
                .filter(|&j| crossings[j] >= lo)
                .min_by(|&a, &b| {
                    (crossings[a] - expected)
                        .abs()
                        .total_cmp(&(crossings[b] - expected).abs())
                });
            match next {
                Some(j) if local_period(crossings[j]).is_some() => {
                    marks.push(crossings[j]);
                    cur = j;
                }
                _ => break,
            }
        }
        if marks.len() > MIN_PERIODS {
            chains.push(marks);
        }
        i = cur + 1;
    }

    let periods: Vec<Vec<f64>> = chains
        .iter()
        .map(|m| m.windows(2).map(|w| w[1] - w[0]).collect())
        .collect();
    let amplitudes: Vec<Vec<f64>> = chains
        .iter()
        .map(|m| m.windows(2).map(|w| peak_amplitude(&y, w[0], w[1])).collect())
        .collect();

    let n_periods = periods.iter().map(Vec::len).sum();
    Ok(Perturbation {
        jitter_pct: local_perturbation(&periods).map(T::lit),
        shimmer_pct: local_perturbation(&amplitudes).map(T::lit),
        periods: n_periods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustics::{extract_f0, synth, F0Params};

    fn measure(audio: &Audio<f64>) -> Perturbation<f64> {
        let track = extract_f0(audio, &F0Params::default()).unwrap();
        jitter_shimmer(audio, &track).unwrap()
    }

    #[test]
    fn constant_pulse_train_has_zero_jitter() {
        let p = measure(&synth::pulse_train(80, 8, 1.0, 16_000));
        assert!(p.periods > 150, "{p:?}");
        assert!(p.jitter_pct.unwrap() <= 0.1, "{p:?}");
    }

    #[test]
    fn constant_sine_has_zero_shimmer() {
        let p = measure(&synth::sine(220.0, 0.5, 1.0, 16_000));
        assert!(p.shimmer_pct.unwrap() <= 0.1, "{p:?}");
        assert!(p.jitter_pct.unwrap() <= 0.1, "{p:?}");
    }

    #[test]
    fn alternating_period_modulation() {
        // periods alternate T(1 + 0.02) / T(1 − 0.02): mean |ΔT| / mean T = 0.04
        let closed_form = 100.0 * ((1.02f64 - 0.98).abs()) / ((1.02 + 0.98) / 2.0);
        let p = measure(&synth::alternating_period_sine(200.0, 0.02, 1.0, 16_000));
        let j = p.jitter_pct.unwrap();
        assert!((j - closed_form).abs() <= 0.5, "jitter {j} vs {closed_form}");
    }

    #[test]
    fn amplitude_alternation_shows_as_shimmer() {
        // every other cycle at 0.9 amplitude: mean|ΔA| = 0.1, mean A = 0.95
        let base = synth::sine::<f64>(200.0, 1.0, 1.0, 16_000);
        let samples = base
            .samples
            .iter()
            .enumerate()
            .map(|(i, &s)| if (i / 80) % 2 == 1 { 0.9 * s } else { s })
            .collect();
        let p = measure(&Audio::mono(samples, 16_000));
        let expected = 100.0 * 0.1 / 0.95;
        assert!((p.shimmer_pct.unwrap() - expected).abs() < 0.5, "{p:?}");
    }

    #[test]
    fn silence_has_no_measures() {
        let p = measure(&synth::silence(0.5, 16_000));
        assert_eq!(p.jitter_pct, None);
        assert_eq!(p.shimmer_pct, None);
        assert_eq!(p.periods, 0);
    }
}
