//! Corpus manifests: utterances, N-best hypothesis sets and emotion taxonomies.
//!
//! Both files are UTF-8 JSON Lines. Every record carries `"schema_version": 1`.
//!
//! Utterance record:
//! ```json
//! {"schema_version":1,"id":"Ses01F_impro01_F000","dialogue_id":"Ses01F_impro01",
//!  "turn_index":0,"speaker_gender":"female","audio":"wav/Ses01F_impro01_F000.wav",
//!  "gold_transcript":"Excuse me.","gold_label":"neutral","duration_s":1.26}
//! ```
//!
//! Hypothesis record:
//! ```json
//! {"schema_version":1,"utterance_id":"Ses01F_impro01_F000",
//!  "hypotheses":[{"source_id":"whisper_large","transcript":"excuse me"}]}
//! ```

mod taxonomy;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use taxonomy::{EmotionTaxonomy, LabelRejection, LabelRule, BIG_FOUR, EIGHT_CLASS};

pub const SCHEMA_VERSION: u32 = 1;

/// Upper bound on hypotheses per utterance (10-best protocol).
pub const MAX_HYPOTHESES: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {msg}")]
    Malformed {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}:{line}: unsupported schema_version {found} (expected {SCHEMA_VERSION})")]
    SchemaVersion {
        path: PathBuf,
        line: usize,
        found: u32,
    },
    #[error("{path}:{line}: {rejection}")]
    Label {
        path: PathBuf,
        line: usize,
        rejection: LabelRejection,
    },
    #[error("{path}:{line}: duplicate utterance id {id:?}")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },
    #[error("{path}:{line}: duplicate turn {turn_index} in dialogue {dialogue_id:?}")]
    DuplicateTurn {
        path: PathBuf,
        line: usize,
        dialogue_id: String,
        turn_index: u32,
    },
    #[error("{path}:{line}: hypothesis set references unknown utterance {id:?}")]
    OrphanHypotheses {
        path: PathBuf,
        line: usize,
        id: String,
    },
    #[error("{path}:{line}: invalid hypothesis set: {msg}")]
    InvalidHypotheses {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("unknown utterance id {0:?}")]
    UnknownUtterance(String),
    #[error("invalid taxonomy: {0}")]
    Taxonomy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    #[default]
    Unknown,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub dialogue_id: String,
    pub turn_index: u32,
    #[serde(default)]
    pub speaker_gender: Gender,
    /// Audio path; relative paths resolve against the manifest directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<PathBuf>,
    pub gold_transcript: String,
    pub gold_label: String,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub source_id: String,
    pub transcript: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisSet {
    pub utterance_id: String,
    pub hypotheses: Vec<Hypothesis>,
}

impl HypothesisSet {
    /// First hypothesis in manifest order.
    pub fn top(&self) -> &Hypothesis {
        &self.hypotheses[0]
    }

    pub fn by_source(&self, source_id: &str) -> Option<&Hypothesis> {
        self.hypotheses.iter().find(|h| h.source_id == source_id)
    }
}

#[derive(Deserialize)]
struct UtteranceRecord {
    schema_version: u32,
    #[serde(flatten)]
    utterance: Utterance,
}

#[derive(Deserialize)]
struct HypothesisRecord {
    schema_version: u32,
    #[serde(flatten)]
    set: HypothesisSet,
}

/// Immutable, indexed corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    taxonomy: EmotionTaxonomy,
    base_dir: PathBuf,
    utterances: Vec<Utterance>,
    by_id: HashMap<String, usize>,
    dialogues: BTreeMap<String, Vec<usize>>,
    hypotheses: HashMap<String, HypothesisSet>,
}

fn read_lines(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Yields `(1-based line number, line)` for non-blank lines.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Loads an utterance manifest and applies the taxonomy's label mapping.
pub fn load_manifest(path: &Path, taxonomy: &EmotionTaxonomy) -> Result<Corpus, CorpusError> {
    let text = read_lines(path)?;
    let mut utterances = Vec::new();
    for (line, raw) in records(&text) {
        let rec: UtteranceRecord =
            serde_json::from_str(raw).map_err(|e| CorpusError::Malformed {
                path: path.to_path_buf(),
                line,
                msg: e.to_string(),
            })?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(CorpusError::SchemaVersion {
                path: path.to_path_buf(),
                line,
                found: rec.schema_version,
            });
        }
        let mut u = rec.utterance;
        let malformed = |msg: &str| CorpusError::Malformed {
            path: path.to_path_buf(),
            line,
            msg: msg.to_string(),
        };
        if u.id.is_empty() {
            return Err(malformed("empty id"));
        }
        if !(u.duration_s.is_finite() && u.duration_s > 0.0) {
            return Err(malformed("duration_s must be positive"));
        }
        u.gold_label = taxonomy
            .map_label(&u.gold_label)
            .map_err(|rejection| CorpusError::Label {
                path: path.to_path_buf(),
                line,
                rejection,
            })?;
        utterances.push((line, u));
    }
    Corpus::from_utterances(path, taxonomy.clone(), utterances)
}

impl Corpus {
    fn from_utterances(
        path: &Path,
        taxonomy: EmotionTaxonomy,
        records: Vec<(usize, Utterance)>,
    ) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::new();
        let mut dialogues: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut turns: HashSet<(String, u32)> = HashSet::new();
        let mut utterances = Vec::with_capacity(records.len());
        for (idx, (line, u)) in records.into_iter().enumerate() {
            if by_id.insert(u.id.clone(), idx).is_some() {
                return Err(CorpusError::DuplicateId {
                    path: path.to_path_buf(),
                    line,
                    id: u.id,
                });
            }
            if !turns.insert((u.dialogue_id.clone(), u.turn_index)) {
                return Err(CorpusError::DuplicateTurn {
                    path: path.to_path_buf(),
                    line,
                    dialogue_id: u.dialogue_id,
                    turn_index: u.turn_index,
                });
            }
            dialogues.entry(u.dialogue_id.clone()).or_default().push(idx);
            utterances.push(u);
        }
        for members in dialogues.values_mut() {
            members.sort_by_key(|&i| utterances[i].turn_index);
        }
        Ok(Self {
            taxonomy,
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            utterances,
            by_id,
            dialogues,
            hypotheses: HashMap::new(),
        })
    }

    /// Attaches an N-best hypothesis file. Orphan sets are rejected.
    pub fn load_hypotheses(&mut self, path: &Path) -> Result<(), CorpusError> {
        let text = read_lines(path)?;
        let mut loaded = HashMap::new();
        for (line, raw) in records(&text) {
            let rec: HypothesisRecord =
                serde_json::from_str(raw).map_err(|e| CorpusError::Malformed {
                    path: path.to_path_buf(),
                    line,
                    msg: e.to_string(),
                })?;
            if rec.schema_version != SCHEMA_VERSION {
                return Err(CorpusError::SchemaVersion {
                    path: path.to_path_buf(),
                    line,
                    found: rec.schema_version,
                });
            }
            let set = rec.set;
            let invalid = |msg: String| CorpusError::InvalidHypotheses {
                path: path.to_path_buf(),
                line,
                msg,
            };
            if !self.by_id.contains_key(&set.utterance_id) {
                return Err(CorpusError::OrphanHypotheses {
                    path: path.to_path_buf(),
                    line,
                    id: set.utterance_id,
                });
            }
            let n = set.hypotheses.len();
            if n == 0 || n > MAX_HYPOTHESES {
                return Err(invalid(format!(
                    "{n} hypotheses (expected 1..={MAX_HYPOTHESES})"
                )));
            }
            let mut seen = HashSet::new();
            for h in &set.hypotheses {
                if !seen.insert(h.source_id.as_str()) {
                    return Err(invalid(format!("duplicate source_id {:?}", h.source_id)));
                }
            }
            if loaded.contains_key(&set.utterance_id) {
                return Err(invalid(format!(
                    "second hypothesis set for {:?}",
                    set.utterance_id
                )));
            }
            loaded.insert(set.utterance_id.clone(), set);
        }
        self.hypotheses = loaded;
        Ok(())
    }

    pub fn taxonomy(&self) -> &EmotionTaxonomy {
        &self.taxonomy
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Utterances in manifest order.
    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn get(&self, id: &str) -> Option<&Utterance> {
        self.by_id.get(id).map(|&i| &self.utterances[i])
    }

    pub fn hypotheses(&self, id: &str) -> Option<&HypothesisSet> {
        self.hypotheses.get(id)
    }

    pub fn has_hypotheses(&self) -> bool {
        !self.hypotheses.is_empty()
    }

    /// Source ids in the order they first appear in hypothesis sets, following
    /// manifest order of utterances.
    pub fn hypothesis_sources(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for u in &self.utterances {
            if let Some(set) = self.hypotheses.get(&u.id) {
                for h in &set.hypotheses {
                    if !out.contains(&h.source_id) {
                        out.push(h.source_id.clone());
                    }
                }
            }
        }
        out
    }

    /// Dialogue members sorted by turn index.
    pub fn dialogue(&self, dialogue_id: &str) -> impl Iterator<Item = &Utterance> {
        self.dialogues
            .get(dialogue_id)
            .into_iter()
            .flatten()
            .map(move |&i| &self.utterances[i])
    }

    /// Resolves an utterance's audio path against the manifest directory.
    pub fn audio_path(&self, u: &Utterance) -> Option<PathBuf> {
        u.audio.as_ref().map(|p| {
            if p.is_absolute() {
                p.clone()
            } else {
                self.base_dir.join(p)
            }
        })
    }

    /// Up to `window` utterances preceding `utterance_id` in its dialogue,
    /// in ascending turn order.
    pub fn context_of(
        &self,
        utterance_id: &str,
        window: usize,
    ) -> Result<Vec<&Utterance>, CorpusError> {
        let &idx = self
            .by_id
            .get(utterance_id)
            .ok_or_else(|| CorpusError::UnknownUtterance(utterance_id.to_string()))?;
        let target = &self.utterances[idx];
        let members = &self.dialogues[&target.dialogue_id];
        let pos = members
            .iter()
            .position(|&i| i == idx)
            .expect("utterance indexed in its dialogue");
        let start = pos.saturating_sub(window);
        Ok(members[start..pos]
            .iter()
            .map(|&i| &self.utterances[i])
            .collect())
    }
}
