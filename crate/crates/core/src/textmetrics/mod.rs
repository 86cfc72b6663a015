//! Word error rate and the linguistic knowledge block.

mod align;
mod linguistic;

use serde::{Deserialize, Serialize};

pub use align::{align, Alignment, EditCounts, EditOp, Wer};
pub use linguistic::{format_pct, linguistic_block, LinguisticEvidence, WerReference};

use crate::corpus::Corpus;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TextMetricsError {
    #[error("no pairs with a non-empty reference")]
    AllReferencesEmpty,
}

/// Text normalization applied before alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Normalizer {
    pub lowercase: bool,
    pub strip_punctuation: bool,
}

impl Default for Normalizer {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_punctuation: true,
        }
    }
}

impl Normalizer {
    pub fn tokens(&self, text: &str) -> Vec<String> {
        text.split_whitespace()
            .map(|w| {
                let w: String = if self.strip_punctuation {
                    w.chars().filter(|c| !c.is_ascii_punctuation()).collect()
                } else {
                    w.to_string()
                };
                if self.lowercase {
                    w.to_lowercase()
                } else {
                    w
                }
            })
            .filter(|w| !w.is_empty())
            .collect()
    }

    pub fn align_text(&self, reference: &str, hypothesis: &str) -> Alignment {
        align(&self.tokens(reference), &self.tokens(hypothesis))
    }
}

/// Pooled WER over many pairs, in percent.
pub fn corpus_wer<S: AsRef<str>>(pairs: &[(Vec<S>, Vec<S>)]) -> Result<f64, TextMetricsError> {
    let counts = pairs
        .iter()
        .map(|(r, h)| align(r, h).counts)
        .fold(EditCounts::default(), |a, b| a + b);
    if counts.reference_len == 0 {
        return Err(TextMetricsError::AllReferencesEmpty);
    }
    Ok(100.0 * counts.errors() as f64 / counts.reference_len as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceWer {
    pub source_id: String,
    pub wer_pct: f64,
    pub utterances: usize,
}

/// Corpus WER of every hypothesis source against the gold transcripts,
/// ascending by WER (ties by source id).
pub fn wer_by_source(corpus: &Corpus, normalizer: &Normalizer) -> Vec<SourceWer> {
    let mut out: Vec<SourceWer> = corpus
        .hypothesis_sources()
        .into_iter()
        .filter_map(|source| {
            let pairs: Vec<(Vec<String>, Vec<String>)> = corpus
                .utterances()
                .iter()
                .filter_map(|u| {
                    let h = corpus.hypotheses(&u.id)?.by_source(&source)?;
                    Some((
                        normalizer.tokens(&u.gold_transcript),
                        normalizer.tokens(&h.transcript),
                    ))
                })
                .collect();
            let wer_pct = corpus_wer(&pairs).ok()?;
            Some(SourceWer {
                source_id: source,
                wer_pct,
                utterances: pairs.len(),
            })
        })
        .collect();
    out.sort_by(|a, b| {
        a.wer_pct
            .total_cmp(&b.wer_pct)
            .then_with(|| a.source_id.cmp(&b.source_id))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_lowercases_and_strips() {
        let n = Normalizer::default();
        assert_eq!(n.tokens("Hello, World!  It's OK ..."), vec!["hello", "world", "its", "ok"]);
        let raw = Normalizer {
            lowercase: false,
            strip_punctuation: false,
        };
        assert_eq!(raw.tokens("Hi, there"), vec!["Hi,", "there"]);
    }

    #[test]
    fn pooled_wer() {
        fn p<'a>(r: &'a str, h: &'a str) -> (Vec<&'a str>, Vec<&'a str>) {
            (r.split_whitespace().collect(), h.split_whitespace().collect())
        }
        // one edit over two words, zero edits over two words
        assert_eq!(corpus_wer(&[p("a b", "a c"), p("c d", "c d")]).unwrap(), 25.0);
        assert_eq!(corpus_wer(&[p("a b", "a b")]).unwrap(), 0.0);
        assert_eq!(
            corpus_wer(&[p("", "a")]),
            Err(TextMetricsError::AllReferencesEmpty)
        );
        assert_eq!(corpus_wer::<&str>(&[]), Err(TextMetricsError::AllReferencesEmpty));
    }

    fn pair() -> impl Strategy<Value = (Vec<String>, Vec<String>)> {
        let t = || {
            prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 0..6)
                .prop_map(|v| v.into_iter().map(String::from).collect::<Vec<_>>())
        };
        (t(), t())
    }

    proptest! {
        #[test]
        fn pooling_is_associative(xs in prop::collection::vec(pair(), 1..6),
                                  ys in prop::collection::vec(pair(), 1..6)) {
            let all: Vec<_> = xs.iter().chain(&ys).cloned().collect();
            let counts = |v: &[(Vec<String>, Vec<String>)]| v.iter()
                .map(|(r, h)| align(r, h).counts)
                .fold(EditCounts::default(), |a, b| a + b);
            let joined = counts(&xs) + counts(&ys);
            prop_assert_eq!(joined, counts(&all));
            match (corpus_wer(&all), joined.reference_len) {
                (Ok(w), n) if n > 0 => {
                    prop_assert!((w - 100.0 * joined.errors() as f64 / n as f64).abs() < 1e-9)
                }
                (Err(_), 0) => {}
                other => prop_assert!(false, "{:?}", other),
            }
        }
    }
}
