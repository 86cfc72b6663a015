use std::collections::BTreeMap;
use std::fmt;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PromptError;
use crate::corpus::{Corpus, Utterance};

/// One labeled in-context example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shot {
    pub utterance_id: String,
    pub transcript: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotShortfall {
    pub class: String,
    pub needed: usize,
    pub available: usize,
}

impl fmt::Display for ShotShortfall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: need {}, have {}",
            self.class, self.needed, self.available
        )
    }
}

/// Stratified random sample of `k` shots from outside `exclude`'s dialogue.
///
/// Each class gets `k / C` shots; the remaining `k % C` go to classes picked
/// by the seeded RNG. The result is shuffled, so class order carries no signal.
pub fn select_shots(
    corpus: &Corpus,
    k: usize,
    seed: u64,
    exclude: &str,
) -> Result<Vec<Shot>, PromptError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let target = corpus
        .get(exclude)
        .ok_or_else(|| PromptError::UnknownUtterance(exclude.to_string()))?;
    let classes = corpus.taxonomy().classes();

    let mut pool: BTreeMap<&str, Vec<&Utterance>> =
        classes.iter().map(|c| (c.as_str(), Vec::new())).collect();
    for u in corpus.utterances() {
        if u.dialogue_id != target.dialogue_id {
            if let Some(v) = pool.get_mut(u.gold_label.as_str()) {
                v.push(u);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut quota: BTreeMap<&str, usize> =
        classes.iter().map(|c| (c.as_str(), k / classes.len())).collect();
    let mut order: Vec<&str> = classes.iter().map(String::as_str).collect();
    order.shuffle(&mut rng);
    for c in order.iter().take(k % classes.len()) {
        *quota.get_mut(c).expect("class in quota") += 1;
    }

    let shortfall: Vec<ShotShortfall> = classes
        .iter()
        .filter_map(|c| {
            let (needed, available) = (quota[c.as_str()], pool[c.as_str()].len());
            (available < needed).then(|| ShotShortfall {
                class: c.clone(),
                needed,
                available,
            })
        })
        .collect();
    if !shortfall.is_empty() {
        return Err(PromptError::InsufficientShots(shortfall));
    }

    let mut shots = Vec::with_capacity(k);
    for c in classes {
        let candidates = &pool[c.as_str()];
        for i in index::sample(&mut rng, candidates.len(), quota[c.as_str()]) {
            let u = candidates[i];
            shots.push(Shot {
                utterance_id: u.id.clone(),
                transcript: u.gold_transcript.clone(),
                label: u.gold_label.clone(),
            });
        }
    }
    shots.shuffle(&mut rng);
    Ok(shots)
}
