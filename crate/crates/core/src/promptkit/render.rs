use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{InputMode, KnowledgeBlock, PromptError, PromptSpec, Shot};
use crate::acoustics::{DescriptorSet, Feature};
use crate::corpus::{Gender, HypothesisSet, Utterance};
use crate::template::{vars, TemplateSet};

/// Per-utterance inputs a prompt may draw on.
#[derive(Debug, Clone)]
pub struct Bundle<'a> {
    pub utterance: &'a Utterance,
    /// Transcript shown in single-ASR mode; ground-truth mode uses the gold
    /// transcript when this is `None`.
    pub transcript: Option<&'a str>,
    pub hypotheses: Option<&'a HypothesisSet>,
    pub descriptors: Option<&'a DescriptorSet>,
    pub linguistic: Option<&'a str>,
    /// Transcripts of preceding turns, oldest first.
    pub context: Option<Vec<String>>,
    pub shots: Option<Vec<Shot>>,
}

impl<'a> Bundle<'a> {
    pub fn new(utterance: &'a Utterance) -> Self {
        Self {
            utterance,
            transcript: None,
            hypotheses: None,
            descriptors: None,
            linguistic: None,
            context: None,
            shots: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub prompt_id: String,
    pub utterance_id: String,
    pub system_text: String,
    pub user_text: String,
    pub resolved_placeholders: BTreeMap<String, String>,
}

fn class_list(spec: &PromptSpec) -> String {
    format!("[{}]", spec.class_order.join(", "))
}

/// Resolves `spec` against `bundle`.
///
/// `user_text` is knowledge blocks (acoustics, linguistics, psychology),
/// then context, then shots, then the input, then the task line, separated
/// by blank lines.
pub fn render(
    spec: &PromptSpec,
    bundle: &Bundle<'_>,
    templates: &TemplateSet,
) -> Result<RenderedPrompt, PromptError> {
    spec.validate()?;
    let u = bundle.utterance;
    let missing = |what: &'static str| PromptError::MissingBundle {
        id: spec.id.clone(),
        utterance: u.id.clone(),
        what,
    };

    let mut resolved: BTreeMap<String, String> = BTreeMap::new();
    let mut sections: Vec<String> = Vec::new();

    for &block in &spec.knowledge {
        let mut v = BTreeMap::new();
        match block {
            KnowledgeBlock::Gender => {
                if u.speaker_gender == Gender::Unknown {
                    return Err(missing("speaker gender"));
                }
                v.insert("gender".to_string(), u.speaker_gender.as_str().to_string());
            }
            KnowledgeBlock::Paralinguistic | KnowledgeBlock::ParalinguisticBasic => {
                let features: &[Feature] = if block == KnowledgeBlock::Paralinguistic {
                    &Feature::ALL
                } else {
                    &Feature::BASIC
                };
                let d = bundle
                    .descriptors
                    .ok_or_else(|| missing("acoustic descriptors"))?
                    .render(features);
                if d.is_empty() {
                    return Err(missing("acoustic descriptors"));
                }
                v.insert("descriptors".to_string(), d);
            }
            KnowledgeBlock::AsrRelation => {
                let text = bundle.linguistic.ok_or_else(|| missing("linguistic block"))?;
                resolved.insert("linguistic".into(), text.to_string());
                sections.push(text.to_string());
                continue;
            }
            KnowledgeBlock::Trigger
            | KnowledgeBlock::PosStimuli
            | KnowledgeBlock::NegStimuli
            | KnowledgeBlock::CptStimuli => {}
        }
        sections.push(templates.render(block.template(), &v)?);
        resolved.extend(v);
    }

    if spec.context_window > 0 {
        let context = bundle.context.as_ref().ok_or_else(|| missing("context"))?;
        if !context.is_empty() {
            let items = context
                .iter()
                .map(|t| templates.render("context_item", &vars([("transcript", t.as_str())])))
                .collect::<Result<Vec<_>, _>>()?
                .join("\n");
            sections.push(templates.render("context", &vars([("items", items)]))?);
        }
        resolved.insert("context_turns".into(), context.len().to_string());
    }

    if spec.shots > 0 {
        let shots = bundle.shots.as_ref().ok_or_else(|| missing("few-shot examples"))?;
        if shots.is_empty() {
            return Err(missing("few-shot examples"));
        }
        let items = shots
            .iter()
            .map(|s| {
                templates.render(
                    "shot_item",
                    &vars([("transcript", s.transcript.as_str()), ("label", s.label.as_str())]),
                )
            })
            .collect::<Result<Vec<_>, _>>()?
            .join("\n");
        sections.push(templates.render("shots", &vars([("items", items)]))?);
        resolved.insert("shots".into(), shots.len().to_string());
    }

    let mut n_hyps = None;
    match spec.input_mode {
        InputMode::GroundTruth | InputMode::SingleAsr => {
            let transcript = match (spec.input_mode, bundle.transcript) {
                (_, Some(t)) => t,
                (InputMode::GroundTruth, None) => u.gold_transcript.as_str(),
                _ => return Err(missing("ASR transcript")),
            };
            sections.push(templates.render("input_transcript", &vars([("transcript", transcript)]))?);
            resolved.insert("transcript".into(), transcript.to_string());
        }
        InputMode::Nbest => {
            let set = bundle.hypotheses.ok_or_else(|| missing("N-best hypotheses"))?;
            let items = set
                .hypotheses
                .iter()
                .enumerate()
                .map(|(i, h)| {
                    templates.render(
                        "nbest_item",
                        &vars([("rank", (i + 1).to_string()), ("transcript", h.transcript.clone())]),
                    )
                })
                .collect::<Result<Vec<_>, _>>()?
                .join("\n");
            let n = set.hypotheses.len().to_string();
            sections.push(templates.render("input_nbest", &vars([("n", n.clone()), ("items", items)]))?);
            n_hyps = Some(n);
        }
    }

    let mut task_vars = vars([
        ("verb", spec.verb.word().to_string()),
        ("verb_lower", spec.verb.word().to_lowercase()),
        ("classes", class_list(spec)),
    ]);
    if let Some(n) = n_hyps {
        task_vars.insert("n".into(), n);
    }
    let task_template = match (spec.aec, spec.reasoning) {
        (true, true) => "task_aec",
        (true, false) => "task_aec_no_reasoning",
        (false, true) => "task_reasoning",
        (false, false) => "task",
    };
    let mut task = templates.render(task_template, &task_vars)?;
    if !spec.reasoning {
        task.push(' ');
        task.push_str(&templates.render("no_explanation", &BTreeMap::new())?);
    }
    sections.push(task);
    resolved.extend(task_vars);

    let system_text = templates.render(if spec.aec { "system_aec" } else { "system" }, &BTreeMap::new())?;

    Ok(RenderedPrompt {
        prompt_id: spec.id.clone(),
        utterance_id: u.id.clone(),
        system_text,
        user_text: sections.join("\n\n"),
        resolved_placeholders: resolved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustics::Level;
    use crate::corpus::{EmotionTaxonomy, Hypothesis};
    use crate::promptkit::{catalog, preset, PromptSpec};

    fn utterance() -> Utterance {
        Utterance {
            id: "u1".into(),
            dialogue_id: "d1".into(),
            turn_index: 2,
            speaker_gender: Gender::Male,
            audio: None,
            gold_transcript: "I can't believe you did that".into(),
            gold_label: "angry".into(),
            duration_s: 2.0,
        }
    }

    fn hyps() -> HypothesisSet {
        HypothesisSet {
            utterance_id: "u1".into(),
            hypotheses: (0..10)
                .map(|i| Hypothesis {
                    source_id: format!("asr{i}"),
                    transcript: format!("i can believe you did that {i}"),
                })
                .collect(),
        }
    }

    fn descriptors() -> DescriptorSet {
        DescriptorSet {
            levels: Feature::ALL.iter().map(|&f| (f, Level::High)).collect(),
            gender: Gender::Male,
        }
    }

    fn full_bundle<'a>(u: &'a Utterance, h: &'a HypothesisSet, d: &'a DescriptorSet) -> Bundle<'a> {
        Bundle {
            utterance: u,
            transcript: Some("i can believe you did that"),
            hypotheses: Some(h),
            descriptors: Some(d),
            linguistic: Some("The transcript is 6 words long. Its word error rate is 16.7%."),
            context: Some(vec!["hello".into(), "what happened".into()]),
            shots: Some(vec![Shot {
                utterance_id: "x".into(),
                transcript: "this is great".into(),
                label: "happy".into(),
            }]),
        }
    }

    #[test]
    fn baseline_ends_with_no_explanation() {
        let t = TemplateSet::builtin();
        let u = utterance();
        let spec = preset("1", &EmotionTaxonomy::big_four()).unwrap();
        let r = render(&spec, &Bundle::new(&u), &t).unwrap();
        assert!(r.user_text.ends_with("Do not show your explanation."));
        assert!(r
            .user_text
            .contains("Predict the emotion from [angry, happy, neutral, sad]."));
        assert!(r.user_text.contains(&u.gold_transcript));
    }

    #[test]
    fn reasoning_prompt_does_not_suppress_explanation() {
        let t = TemplateSet::builtin();
        let u = utterance();
        let spec = preset("2", &EmotionTaxonomy::big_four()).unwrap();
        let r = render(&spec, &Bundle::new(&u), &t).unwrap();
        assert!(!r.user_text.contains("Do not show your explanation."));
    }

    #[test]
    fn r3_prompt_shape() {
        let t = TemplateSet::builtin();
        let (u, h, d) = (utterance(), hyps(), descriptors());
        let spec = preset("r3", &EmotionTaxonomy::big_four()).unwrap();
        let r = render(&spec, &full_bundle(&u, &h, &d), &t).unwrap();
        assert!(r
            .system_text
            .contains("You are an ASR error corrector and emotion recognizer"));
        assert!(r.user_text.contains("Generate the most likely transcript from the 10-best ASR hypotheses"));
        for (i, hyp) in h.hypotheses.iter().enumerate() {
            assert!(r.user_text.contains(&format!("{}. {}", i + 1, hyp.transcript)));
        }
        assert!(!r.user_text.contains("Do not show your explanation."));
        // knowledge order: acoustics, linguistics, psychology
        let pos = |s: &str| r.user_text.find(s).unwrap();
        assert!(pos("Acoustic descriptors") < pos("trigger words"));
        assert!(pos("trigger words") < pos("6 words long"));
        assert!(pos("6 words long") < pos("doubt your competence"));
    }

    #[test]
    fn missing_inputs_are_errors() {
        let t = TemplateSet::builtin();
        let u = utterance();
        let tax = EmotionTaxonomy::big_four();
        for id in ["4", "6", "r3"] {
            let spec = preset(id, &tax).unwrap();
            assert!(matches!(
                render(&spec, &Bundle::new(&u), &t),
                Err(PromptError::MissingBundle { .. })
            ));
        }
        let mut unknown = utterance();
        unknown.speaker_gender = Gender::Unknown;
        let spec = preset("3", &tax).unwrap();
        assert!(render(&spec, &Bundle::new(&unknown), &t).is_err());
        let ctx = preset("1", &tax).unwrap().with_context_window(5);
        assert!(render(&ctx, &Bundle::new(&u), &t).is_err());
        let shots = preset("1", &tax).unwrap().with_shots(2);
        assert!(render(&shots, &Bundle::new(&u), &t).is_err());
    }

    #[test]
    fn empty_context_is_omitted() {
        let t = TemplateSet::builtin();
        let u = utterance();
        let spec = preset("1", &EmotionTaxonomy::big_four()).unwrap().with_context_window(25);
        let mut b = Bundle::new(&u);
        b.context = Some(vec![]);
        let r = render(&spec, &b, &t).unwrap();
        assert!(!r.user_text.contains("Preceding utterances"));
        b.context = Some(vec!["earlier turn".into()]);
        let r = render(&spec, &b, &t).unwrap();
        assert!(r.user_text.contains("- earlier turn"));
    }

    #[test]
    fn every_preset_renders_against_complete_bundle() {
        let t = TemplateSet::builtin();
        let (u, h, d) = (utterance(), hyps(), descriptors());
        for tax in [EmotionTaxonomy::big_four(), EmotionTaxonomy::eight_class()] {
            for spec in catalog(&tax).into_iter().chain(super::super::ablations(&tax)) {
                let r = render(&spec, &full_bundle(&u, &h, &d), &t).unwrap();
                let again = render(&spec, &full_bundle(&u, &h, &d), &t).unwrap();
                assert_eq!(r, again);
                assert!(!r.user_text.contains('{'), "{}", r.user_text);
            }
        }
    }

    #[test]
    fn added_block_only_adds_sections() {
        let t = TemplateSet::builtin();
        let (u, h, d) = (utterance(), hyps(), descriptors());
        let tax = EmotionTaxonomy::big_four();
        let b = full_bundle(&u, &h, &d);
        let base = PromptSpec::new("b", "b", &tax);
        let all = [
            KnowledgeBlock::Gender,
            KnowledgeBlock::Paralinguistic,
            KnowledgeBlock::Trigger,
            KnowledgeBlock::PosStimuli,
            KnowledgeBlock::NegStimuli,
            KnowledgeBlock::CptStimuli,
        ];
        for mask in 0u32..(1 << all.len()) {
            let mut small = base.clone();
            for (i, blk) in all.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    small.knowledge.insert(*blk);
                }
            }
            for extra in all {
                let mut big = small.clone();
                big.knowledge.insert(extra);
                let s = render(&small, &b, &t).unwrap().user_text;
                let l = render(&big, &b, &t).unwrap().user_text;
                let ls: Vec<&str> = l.split("\n\n").collect();
                let mut it = ls.iter();
                for sec in s.split("\n\n") {
                    assert!(it.any(|x| *x == sec), "section {sec:?} lost");
                }
            }
        }
    }
}
