use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_json, sha256_hex, write_json, PipelineError, RunConfig, ARTIFACT_SCHEMA_VERSION};
use crate::acoustics::{calibrate, profile, read_wav, F0Params};
use crate::corpus::{load_manifest, Corpus, Utterance};
use crate::{AcousticProfile, Calibration};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractFailure {
    pub utterance_id: String,
    pub error: String,
}

/// Profiles and corpus calibration, as persisted by [`cmd_extract`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStore {
    pub schema_version: u32,
    pub params: F0Params,
    pub profiles: BTreeMap<String, AcousticProfile>,
    pub calibration: Calibration,
    pub failures: Vec<ExtractFailure>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractSummary {
    pub computed: usize,
    pub reused: usize,
    pub without_audio: usize,
    pub failures: Vec<ExtractFailure>,
    pub store: PathBuf,
}

pub fn features_path(out: &Path) -> PathBuf {
    out.join("features").join("features.json")
}

/// Content key of one profile computation.
fn profile_key(audio: &[u8], u: &Utterance, params: &F0Params) -> String {
    let inputs = serde_json::json!({
        "audio": sha256_hex(audio),
        "transcript": u.gold_transcript,
        "gender": u.speaker_gender,
        "duration_s": u.duration_s,
        "params": params,
    });
    sha256_hex(inputs.to_string().as_bytes())
}

enum Outcome {
    Computed(AcousticProfile),
    Reused(AcousticProfile),
    Failed(String),
}

fn profile_one(corpus: &Corpus, u: &Utterance, params: &F0Params, cache: &Path) -> Option<Outcome> {
    let path = corpus.audio_path(u)?;
    let bytes = match std::fs::read(&path) {
        Ok(b) => b,
        Err(e) => return Some(Outcome::Failed(format!("{}: {e}", path.display()))),
    };
    let cached = cache.join(format!("{}.json", profile_key(&bytes, u, params)));
    if let Ok(p) = read_json::<AcousticProfile>(&cached) {
        return Some(Outcome::Reused(p));
    }
    let result = read_wav::<f64>(&path).and_then(|audio| profile(u, &audio, &u.gold_transcript, params));
    Some(match result {
        Ok(p) => match write_json(&cached, &p) {
            Ok(()) => Outcome::Computed(p),
            Err(e) => Outcome::Failed(e.to_string()),
        },
        Err(e) => Outcome::Failed(format!("{}: {e}", path.display())),
    })
}

/// Profiles every utterance with audio and calibrates over the corpus.
///
/// Decode failures are recorded and skipped. Per-utterance profiles are
/// cached by content hash, so an unchanged rerun recomputes nothing.
pub fn cmd_extract(config: &RunConfig) -> Result<ExtractSummary, PipelineError> {
    let taxonomy = config.taxonomy()?;
    let corpus = load_manifest(&config.corpus.manifest, &taxonomy)?;
    let params = config.features.f0;
    let cache = config.output.dir.join("features").join("profiles");

    let outcomes: Vec<(String, Option<Outcome>)> = corpus
        .utterances()
        .par_iter()
        .map(|u| (u.id.clone(), profile_one(&corpus, u, &params, &cache)))
        .collect();

    let mut profiles = BTreeMap::new();
    let mut failures = Vec::new();
    let (mut computed, mut reused, mut without_audio) = (0, 0, 0);
    for (id, outcome) in outcomes {
        match outcome {
            None => without_audio += 1,
            Some(Outcome::Computed(p)) => {
                computed += 1;
                profiles.insert(id, p);
            }
            Some(Outcome::Reused(p)) => {
                reused += 1;
                profiles.insert(id, p);
            }
            Some(Outcome::Failed(error)) => {
                log::warn!("feature extraction failed for {id}: {error}");
                failures.push(ExtractFailure {
                    utterance_id: id,
                    error,
                });
            }
        }
    }
    let values: Vec<AcousticProfile> = profiles.values().cloned().collect();
    let store = FeatureStore {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        params,
        profiles,
        calibration: calibrate(&values),
        failures: failures.clone(),
    };
    let path = features_path(&config.output.dir);
    write_json(&path, &store)?;
    Ok(ExtractSummary {
        computed,
        reused,
        without_audio,
        failures,
        store: path,
    })
}

/// Reads the store written by [`cmd_extract`], if any.
pub fn load_features(out: &Path) -> Result<Option<FeatureStore>, PipelineError> {
    let path = features_path(out);
    if !path.exists() {
        return Ok(None);
    }
    let store: FeatureStore = read_json(&path)?;
    if store.schema_version != ARTIFACT_SCHEMA_VERSION {
        return Err(PipelineError::Data(format!(
            "{}: unsupported schema_version {}",
            path.display(),
            store.schema_version
        )));
    }
    Ok(Some(store))
}
