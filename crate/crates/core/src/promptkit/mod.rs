//! Prompt catalog, rendering, few-shot selection and prompt variations.
//!
//! A [`PromptSpec`] is a declarative recipe; [`render`] resolves it against a
//! [`Bundle`] of per-utterance inputs using a [`TemplateSet`](crate::template::TemplateSet).
//! All wording lives in templates, none in code.

mod render;
mod shots;
mod variations;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use render::{render, Bundle, RenderedPrompt};
pub use shots::{select_shots, Shot, ShotShortfall};
pub use variations::{describe_order, variations, HNAS_ORDER_TAG};

use crate::corpus::EmotionTaxonomy;
use crate::template::TemplateError;

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("invalid prompt spec {id:?}: {msg}")]
    Invalid { id: String, msg: String },
    #[error("prompt {id:?} needs {what} for utterance {utterance:?}")]
    MissingBundle {
        id: String,
        utterance: String,
        what: &'static str,
    },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("{0:?} is already a variation; variations are single-hop")]
    NestedVariation(String),
    #[error("not enough shots: {}", .0.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("; "))]
    InsufficientShots(Vec<ShotShortfall>),
    #[error("unknown utterance {0:?}")]
    UnknownUtterance(String),
    #[error("unknown prompt preset {0:?}")]
    UnknownPreset(String),
}

/// Knowledge blocks; declaration order is rendering order
/// (acoustics, linguistics, psychology).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeBlock {
    Gender,
    Paralinguistic,
    /// Energy, pitch and speaking rate without pitch range, jitter, shimmer.
    ParalinguisticBasic,
    Trigger,
    AsrRelation,
    PosStimuli,
    NegStimuli,
    CptStimuli,
}

impl KnowledgeBlock {
    pub fn template(self) -> &'static str {
        match self {
            KnowledgeBlock::Gender => "block_gender",
            KnowledgeBlock::Paralinguistic | KnowledgeBlock::ParalinguisticBasic => {
                "block_paralinguistic"
            }
            KnowledgeBlock::Trigger => "block_trigger",
            KnowledgeBlock::AsrRelation => "block_asr_relation",
            KnowledgeBlock::PosStimuli => "block_pos_stimuli",
            KnowledgeBlock::NegStimuli => "block_neg_stimuli",
            KnowledgeBlock::CptStimuli => "block_cpt_stimuli",
        }
    }

    pub fn needs_descriptors(self) -> bool {
        matches!(
            self,
            KnowledgeBlock::Paralinguistic | KnowledgeBlock::ParalinguisticBasic
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    #[default]
    GroundTruth,
    SingleAsr,
    Nbest,
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputMode::GroundTruth => "ground_truth",
            InputMode::SingleAsr => "single_asr",
            InputMode::Nbest => "nbest",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    #[default]
    Predict,
    Select,
}

impl Verb {
    pub fn word(self) -> &'static str {
        match self {
            Verb::Predict => "Predict",
            Verb::Select => "Select",
        }
    }

    pub fn swapped(self) -> Self {
        match self {
            Verb::Predict => Verb::Select,
            Verb::Select => Verb::Predict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub id: String,
    pub label: String,
    pub knowledge: BTreeSet<KnowledgeBlock>,
    pub reasoning: bool,
    pub aec: bool,
    pub input_mode: InputMode,
    pub context_window: usize,
    pub shots: usize,
    pub taxonomy: EmotionTaxonomy,
    pub class_order: Vec<String>,
    pub verb: Verb,
    /// Set on specs produced by [`variations`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variation: Option<String>,
}

impl PromptSpec {
    pub fn new(id: &str, label: &str, taxonomy: &EmotionTaxonomy) -> Self {
        Self {
            id: id.to_string(),
            label: label.to_string(),
            knowledge: BTreeSet::new(),
            reasoning: false,
            aec: false,
            input_mode: InputMode::GroundTruth,
            context_window: 0,
            shots: 0,
            taxonomy: taxonomy.clone(),
            class_order: taxonomy.classes().to_vec(),
            verb: Verb::Predict,
            variation: None,
        }
    }

    fn blocks(mut self, blocks: &[KnowledgeBlock]) -> Self {
        self.knowledge.extend(blocks.iter().copied());
        self
    }

    fn reasoning(mut self) -> Self {
        self.reasoning = true;
        self
    }

    pub fn with_input_mode(mut self, mode: InputMode) -> Self {
        self.input_mode = mode;
        self
    }

    pub fn with_context_window(mut self, window: usize) -> Self {
        self.context_window = window;
        self
    }

    pub fn with_shots(mut self, shots: usize) -> Self {
        self.shots = shots;
        self
    }

    pub fn has(&self, block: KnowledgeBlock) -> bool {
        self.knowledge.contains(&block)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let invalid = |msg: &str| {
            Err(PromptError::Invalid {
                id: self.id.clone(),
                msg: msg.to_string(),
            })
        };
        if self.aec && self.input_mode != InputMode::Nbest {
            return invalid("ASR error correction requires nbest input");
        }
        if self.has(KnowledgeBlock::AsrRelation) && self.input_mode == InputMode::GroundTruth {
            return invalid("the ASR-relation block does not apply to ground-truth input");
        }
        let mut sorted_order = self.class_order.clone();
        sorted_order.sort();
        let mut sorted_classes = self.taxonomy.classes().to_vec();
        sorted_classes.sort();
        if sorted_order != sorted_classes {
            return invalid("class_order is not a permutation of the taxonomy classes");
        }
        Ok(())
    }
}

use KnowledgeBlock::*;

/// The nine single-knowledge presets, the two named combinations and R3.
pub fn catalog(taxonomy: &EmotionTaxonomy) -> Vec<PromptSpec> {
    let p = |id: &str, label: &str| PromptSpec::new(id, label, taxonomy);
    vec![
        p("1", "No reasoning"),
        p("2", "Reasoning").reasoning(),
        p("3", "Gender").blocks(&[Gender]),
        p("4", "Paraling").blocks(&[Paralinguistic]),
        p("5", "Trigger").blocks(&[Trigger]),
        p("6", "ASR relation")
            .blocks(&[AsrRelation])
            .with_input_mode(InputMode::SingleAsr),
        p("7", "Pos stimuli").blocks(&[PosStimuli]),
        p("8", "Neg stimuli").blocks(&[NegStimuli]),
        p("9", "Cpt stimuli").blocks(&[CptStimuli]),
        p("4+5+8", "4 + 5 + 8").blocks(&[Paralinguistic, Trigger, NegStimuli]),
        p("4+5+6+8", "4 + 5 + 6 + 8")
            .blocks(&[Paralinguistic, Trigger, AsrRelation, NegStimuli])
            .with_input_mode(InputMode::SingleAsr),
        r3(taxonomy),
    ]
}

fn r3(taxonomy: &EmotionTaxonomy) -> PromptSpec {
    let mut spec = PromptSpec::new("r3", "R3", taxonomy)
        .blocks(&[Paralinguistic, Trigger, AsrRelation, NegStimuli])
        .reasoning()
        .with_input_mode(InputMode::Nbest);
    spec.aec = true;
    spec
}

/// Ablation presets: R3 without AEC, R3 without reasoning, and the
/// paralinguistic prompt without pitch range, jitter and shimmer.
pub fn ablations(taxonomy: &EmotionTaxonomy) -> Vec<PromptSpec> {
    let mut no_aec = r3(taxonomy);
    no_aec.id = "r3-no-aec".into();
    no_aec.label = "w/o AEC".into();
    no_aec.aec = false;

    let mut no_reasoning = r3(taxonomy);
    no_reasoning.id = "r3-no-reasoning".into();
    no_reasoning.label = "w/o reasoning".into();
    no_reasoning.reasoning = false;

    let basic = PromptSpec::new("4-basic", "w/o Pr, Ji, Sh", taxonomy).blocks(&[ParalinguisticBasic]);
    vec![no_aec, no_reasoning, basic]
}

/// Looks up a catalog or ablation preset by id.
pub fn preset(id: &str, taxonomy: &EmotionTaxonomy) -> Result<PromptSpec, PromptError> {
    catalog(taxonomy)
        .into_iter()
        .chain(ablations(taxonomy))
        .find(|p| p.id == id)
        .ok_or_else(|| PromptError::UnknownPreset(id.to_string()))
}
