use serde::{Deserialize, Serialize};

use super::{Alignment, Wer};
use crate::promptkit::InputMode;
use crate::template::{vars, TemplateError, TemplateSet};

/// What the shown transcript was aligned against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WerReference {
    /// Gold transcript (evaluation setting).
    #[default]
    Gold,
    /// Top hypothesis; the resulting WER is labeled as estimated.
    TopHypothesis,
}

/// Numbers rendered into the ASR-relation block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinguisticEvidence {
    pub wer: Wer,
    pub length_words: usize,
    pub reference: WerReference,
}

impl LinguisticEvidence {
    pub fn new(alignment: &Alignment, hypothesis_len: usize, reference: WerReference) -> Self {
        Self {
            wer: alignment.wer(),
            length_words: hypothesis_len,
            reference,
        }
    }
}

/// Percentage with at most one decimal: `0`, `12.5`, `33.3`.
pub fn format_pct(pct: f64) -> String {
    let tenths = (pct * 10.0).round();
    if tenths % 10.0 == 0.0 {
        format!("{:.0}", tenths / 10.0)
    } else {
        format!("{:.1}", tenths / 10.0)
    }
}

/// Renders the ASR-emotion relation block, or `None` in ground-truth mode.
///
/// The WER clause is dropped when the reference was empty.
pub fn linguistic_block(
    evidence: &LinguisticEvidence,
    input_mode: InputMode,
    templates: &TemplateSet,
) -> Result<Option<String>, TemplateError> {
    if input_mode == InputMode::GroundTruth {
        return Ok(None);
    }
    let wer_clause = match (evidence.wer, evidence.reference) {
        (Wer::EmptyReference, _) => String::new(),
        (Wer::Rate(r), WerReference::Gold) => {
            format!(" Its word error rate is {}%.", format_pct(100.0 * r))
        }
        (Wer::Rate(r), WerReference::TopHypothesis) => {
            format!(" Its estimated word error rate is {}%.", format_pct(100.0 * r))
        }
    };
    let relations = templates.render("asr_relations", &Default::default())?;
    templates
        .render(
            "block_asr_relation",
            &vars([
                ("length", evidence.length_words.to_string()),
                ("wer_clause", wer_clause),
                ("relations", relations),
            ]),
        )
        .map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textmetrics::align;

    fn evidence(r: &str, h: &str, reference: WerReference) -> LinguisticEvidence {
        let rt: Vec<&str> = r.split_whitespace().collect();
        let ht: Vec<&str> = h.split_whitespace().collect();
        LinguisticEvidence::new(&align(&rt, &ht), ht.len(), reference)
    }

    #[test]
    fn renders_wer_and_length() {
        let t = TemplateSet::builtin();
        let e = evidence("a b c d e f g", "a b c d e f g", WerReference::Gold);
        let text = linguistic_block(&e, InputMode::SingleAsr, &t).unwrap().unwrap();
        assert!(text.contains("0%"), "{text}");
        assert!(text.contains("7 words"), "{text}");
        assert!(!text.contains("estimated"));
    }

    #[test]
    fn estimated_label_for_top_hypothesis_reference() {
        let t = TemplateSet::builtin();
        let e = evidence("a b c", "a x c", WerReference::TopHypothesis);
        let text = linguistic_block(&e, InputMode::Nbest, &t).unwrap().unwrap();
        assert!(text.contains("estimated word error rate is 33.3%"), "{text}");
    }

    #[test]
    fn empty_reference_omits_wer_clause() {
        let t = TemplateSet::builtin();
        let e = evidence("", "hello there", WerReference::Gold);
        let text = linguistic_block(&e, InputMode::SingleAsr, &t).unwrap().unwrap();
        assert!(!text.contains("error rate is"), "{text}");
        assert!(text.contains("2 words"));
    }

    #[test]
    fn suppressed_on_ground_truth() {
        let t = TemplateSet::builtin();
        let e = evidence("a", "a", WerReference::Gold);
        assert_eq!(linguistic_block(&e, InputMode::GroundTruth, &t).unwrap(), None);
    }

    #[test]
    fn pct_formatting() {
        assert_eq!(format_pct(0.0), "0");
        assert_eq!(format_pct(12.5), "12.5");
        assert_eq!(format_pct(100.0 / 3.0), "33.3");
        assert_eq!(format_pct(40.0), "40");
    }
}
