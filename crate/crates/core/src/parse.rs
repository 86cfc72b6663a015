//! Turning raw completions into labels.
//!
//! Class names are matched case-insensitively as whole words; the earliest
//! mention wins. Text naming no class maps to the taxonomy fallback.

use serde::{Deserialize, Serialize};

use crate::corpus::EmotionTaxonomy;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub fallback_applied: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_transcript: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    /// Byte range of the matched class name in the raw text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_span: Option<(usize, usize)>,
    /// Set when an R3 response lacked the `Emotion:` marker.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub markers_missing: bool,
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Earliest whole-word occurrence of any class in `text`, as
/// `(class, start, end)`.
fn find_class<'t>(text: &str, taxonomy: &'t EmotionTaxonomy) -> Option<(&'t str, usize, usize)> {
    let lower = text.to_ascii_lowercase();
    let bytes = lower.as_bytes();
    let mut best: Option<(&str, usize, usize)> = None;
    for class in taxonomy.classes() {
        let mut from = 0;
        while let Some(off) = lower[from..].find(class.as_str()) {
            let start = from + off;
            let end = start + class.len();
            let left_ok = start == 0 || !is_word_byte(bytes[start - 1]);
            let right_ok = end == bytes.len() || !is_word_byte(bytes[end]);
            if left_ok && right_ok {
                if best.map_or(true, |(_, s, _)| start < s) {
                    best = Some((class.as_str(), start, end));
                }
                break;
            }
            from = start + 1;
            while !lower.is_char_boundary(from) {
                from += 1;
            }
        }
    }
    best
}

fn labeled(found: Option<(&str, usize, usize)>, offset: usize, taxonomy: &EmotionTaxonomy) -> Prediction {
    match found {
        Some((class, s, e)) => Prediction {
            label: class.to_string(),
            fallback_applied: false,
            corrected_transcript: None,
            reasoning: None,
            matched_span: Some((s + offset, e + offset)),
            markers_missing: false,
        },
        None => Prediction {
            label: taxonomy.fallback().to_string(),
            fallback_applied: true,
            corrected_transcript: None,
            reasoning: None,
            matched_span: None,
            markers_missing: false,
        },
    }
}

/// Label from free text. Total: always returns a taxonomy member.
pub fn parse_label(raw: &str, taxonomy: &EmotionTaxonomy) -> Prediction {
    labeled(find_class(raw, taxonomy), 0, taxonomy)
}

const TRANSCRIPT: &str = "transcript:";
const REASONING: &str = "reasoning:";
const EMOTION: &str = "emotion:";

/// Case-insensitive byte offset of the first `marker`.
fn marker(lower: &str, marker: &str) -> Option<usize> {
    lower.find(marker)
}

fn section(raw: &str, start: usize, ends: &[Option<usize>]) -> String {
    let end = ends
        .iter()
        .flatten()
        .copied()
        .filter(|&e| e > start)
        .min()
        .unwrap_or(raw.len());
    raw[start..end].trim().trim_matches('"').trim().to_string()
}

/// Splits a `Transcript: … Reasoning: … Emotion: …` response.
///
/// The label comes from the `Emotion:` section when it names a class and
/// from the whole text otherwise, so the fallback flag keeps its meaning.
pub fn parse_r3(raw: &str, taxonomy: &EmotionTaxonomy) -> Prediction {
    let lower = raw.to_ascii_lowercase();
    let t = marker(&lower, TRANSCRIPT);
    let r = marker(&lower, REASONING);
    let e = marker(&lower, EMOTION);
    let bounds = [t, r, e];

    let mut pred = match e {
        Some(pos) => {
            let start = pos + EMOTION.len();
            match find_class(&raw[start..], taxonomy) {
                Some(found) => labeled(Some(found), start, taxonomy),
                None => parse_label(raw, taxonomy),
            }
        }
        None => parse_label(raw, taxonomy),
    };
    pred.markers_missing = e.is_none();
    pred.corrected_transcript = t
        .map(|pos| section(raw, pos + TRANSCRIPT.len(), &bounds))
        .filter(|s| !s.is_empty());
    pred.reasoning = r
        .map(|pos| section(raw, pos + REASONING.len(), &bounds))
        .filter(|s| !s.is_empty());
    pred
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn four() -> EmotionTaxonomy {
        EmotionTaxonomy::big_four()
    }

    #[test]
    fn simple_labels() {
        let p = parse_label("Angry.", &four());
        assert_eq!((p.label.as_str(), p.fallback_applied), ("angry", false));
        assert_eq!(p.matched_span, Some((0, 5)));
        let p = parse_label("I cannot determine the emotion.", &four());
        assert_eq!((p.label.as_str(), p.fallback_applied), ("neutral", true));
        assert_eq!(parse_label("The speaker sounds sad, not happy.", &four()).label, "sad");
        assert_eq!(parse_label("", &four()).label, "neutral");
    }

    #[test]
    fn whole_words_only() {
        let p = parse_label("unhappy", &four());
        assert!(p.fallback_applied);
        assert!(parse_label("saddened and happyish", &four()).fallback_applied);
        assert_eq!(parse_label("unhappy, then HAPPY", &four()).label, "happy");
        assert_eq!(parse_label("non-happy", &four()).label, "happy");
    }

    #[test]
    fn eight_class_names() {
        let t = EmotionTaxonomy::eight_class();
        assert_eq!(parse_label("Contemptuous!", &t).label, "contemptuous");
        assert_eq!(parse_label("maybe surprised or fearful", &t).label, "surprised");
        assert!(parse_label("contempt", &t).fallback_applied);
    }

    #[test]
    fn r3_sections() {
        let raw = "Transcript: I said no. Reasoning: low pitch and slow rate. Emotion: sad";
        let p = parse_r3(raw, &four());
        assert_eq!(p.label, "sad");
        assert!(!p.fallback_applied && !p.markers_missing);
        assert_eq!(p.corrected_transcript.as_deref(), Some("I said no."));
        assert_eq!(p.reasoning.as_deref(), Some("low pitch and slow rate."));
        let (s, e) = p.matched_span.unwrap();
        assert_eq!(&raw[s..e], "sad");
    }

    #[test]
    fn r3_label_from_emotion_section_not_reasoning() {
        let raw = "Transcript: \"fine\" Reasoning: not angry at all. Emotion: Neutral";
        let p = parse_r3(raw, &four());
        assert_eq!(p.label, "neutral");
        assert_eq!(p.corrected_transcript.as_deref(), Some("fine"));
    }

    #[test]
    fn r3_fallbacks() {
        let p = parse_r3("I think the speaker is happy", &four());
        assert_eq!(p.label, "happy");
        assert!(p.corrected_transcript.is_none() && p.markers_missing);
        let p = parse_r3("", &four());
        assert_eq!((p.label.as_str(), p.fallback_applied), ("neutral", true));
        let p = parse_r3("Transcript: so angry Emotion: unclear", &four());
        assert_eq!((p.label.as_str(), p.fallback_applied), ("angry", false));
    }

    proptest! {
        #[test]
        fn total_and_consistent(raw in ".{0,80}") {
            for p in [parse_label(&raw, &four()), parse_r3(&raw, &four())] {
                prop_assert!(four().contains(&p.label));
                prop_assert_eq!(p.fallback_applied, find_class(&raw, &four()).is_none());
                if let Some((s, e)) = p.matched_span {
                    prop_assert!(raw[s..e].eq_ignore_ascii_case(&p.label));
                }
            }
        }

        #[test]
        fn canonical_rendering_round_trips(i in 0usize..4, upper in any::<bool>()) {
            let t = four();
            let c = &t.classes()[i];
            let text = if upper { c.to_uppercase() } else { c.clone() };
            prop_assert_eq!(&parse_label(&text, &t).label, c);
        }
    }
}
