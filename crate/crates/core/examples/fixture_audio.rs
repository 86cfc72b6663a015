//! Writes deterministic synthetic audio for every utterance of a manifest.
//!
//! Usage: `cargo run -p emoprompt --example fixture_audio -- <manifest.jsonl>`

use std::path::PathBuf;

use emoprompt::acoustics::{synth, write_wav};
use emoprompt::corpus::{load_manifest, EmotionTaxonomy, Gender};

const SAMPLE_RATE: u32 = 8000;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let manifest: PathBuf = std::env::args()
        .nth(1)
        .ok_or("usage: fixture_audio <manifest.jsonl>")?
        .into();
    let corpus = load_manifest(&manifest, &EmotionTaxonomy::big_four())?;
    for (i, u) in corpus.utterances().iter().enumerate() {
        let Some(path) = corpus.audio_path(u) else {
            continue;
        };
        let base = match u.speaker_gender {
            Gender::Female => 210.0,
            _ => 120.0,
        };
        let arousal = match u.gold_label.as_str() {
            "angry" => 1.3,
            "happy" => 1.2,
            "sad" => 0.85,
            _ => 1.0,
        };
        let f0 = base * arousal + (i % 5) as f64 * 3.0;
        let depth = 0.002 * (i % 7) as f64;
        let gain = 0.15 * arousal + 0.02 * (i % 4) as f64;
        let audio = synth::alternating_period_sine::<f64>(f0, depth, u.duration_s, SAMPLE_RATE).scaled(gain);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        write_wav(&path, &audio)?;
    }
    Ok(())
}
