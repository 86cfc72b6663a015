use std::path::Path;

use super::{AcousticsError, Audio};
use crate::scalar::Sample;

/// Reads a 16-bit PCM mono WAV file, scaling samples to [-1, 1).
pub fn read_wav<T: Sample>(path: &Path) -> Result<Audio<T>, AcousticsError> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AcousticsError::Format(format!(
            "{:?} {}-bit (expected 16-bit PCM)",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if spec.channels != 1 {
        return Err(AcousticsError::NotMono(spec.channels));
    }
    let scale = T::lit(1.0 / 32768.0);
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| T::lit(v as f64) * scale))
        .collect::<Result<Vec<_>, _>>()?;
    let audio = Audio::mono(samples, spec.sample_rate);
    if audio.samples.is_empty() {
        return Err(AcousticsError::Empty);
    }
    Ok(audio)
}

/// Writes mono audio as 16-bit PCM, clipping to full scale.
pub fn write_wav<T: Sample>(path: &Path, audio: &Audio<T>) -> Result<(), AcousticsError> {
    let spec = hound::WavSpec {
        channels: audio.channels,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &audio.samples {
        let v = (s.to_f64_lossy() * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}
