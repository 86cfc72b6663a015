use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_text, PipelineError};
use crate::acoustics::F0Params;
use crate::corpus::EmotionTaxonomy;
use crate::eval::Metric;
use crate::llmclient::LlmConfig;
use crate::promptkit::InputMode;
use crate::textmetrics::{Normalizer, WerReference};

/// Experiment description, read from TOML. Relative paths resolve against
/// the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub features: FeaturesSection,
    #[serde(default)]
    pub prompts: PromptsSection,
    #[serde(default)]
    pub llm: LlmSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default, rename = "run")]
    pub runs: Vec<RunEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub manifest: PathBuf,
    #[serde(default)]
    pub hypotheses: Option<PathBuf>,
    #[serde(default = "default_taxonomy")]
    pub taxonomy: String,
}

fn default_taxonomy() -> String {
    "iemocap4".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub f0: F0Params,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptsSection {
    /// Directory of template overrides.
    pub templates: Option<PathBuf>,
    /// Seed for few-shot selection.
    pub seed: u64,
    /// Hypothesis source shown in single-ASR runs; defaults to each
    /// utterance's first hypothesis.
    pub asr_source: Option<String>,
    pub wer_reference: WerReference,
    pub normalizer: Normalizer,
}

impl Default for PromptsSection {
    fn default() -> Self {
        Self {
            templates: None,
            seed: 0,
            asr_source: None,
            wer_reference: WerReference::Gold,
            normalizer: Normalizer::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LlmMode {
    /// Serve responses from the cache directory only.
    #[default]
    Replay,
    /// Scripted responses, no network.
    Mock,
    /// HTTP endpoint; also requires the explicit live switch at run time.
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub mode: LlmMode,
    /// Response cache; replay fixtures live here. Defaults to
    /// `<output>/llm_cache` in replay and live mode; mock mode caches only
    /// when this is set.
    pub cache_dir: Option<PathBuf>,
    /// JSONL of `{"run", "utterance_id", "response"}` records for mock mode.
    pub mock_script: Option<PathBuf>,
    /// Mock answer for items missing from the script.
    pub mock_default: Option<String>,
    pub fail_fast: bool,
    pub client: LlmConfig,
}

impl Default for LlmSection {
    fn default() -> Self {
        Self {
            mode: LlmMode::Replay,
            cache_dir: None,
            mock_script: None,
            mock_default: None,
            fail_fast: true,
            client: LlmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Run id the delta table compares against.
    pub baseline: String,
    pub metric: Metric,
    pub majority_vote: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            baseline: "1".into(),
            metric: Metric::Ua,
            majority_vote: true,
        }
    }
}

/// One prompting run: a preset plus overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunEntry {
    pub preset: String,
    /// Defaults to a name derived from the preset and overrides.
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub input_mode: Option<InputMode>,
    #[serde(default)]
    pub asr_source: Option<String>,
    #[serde(default)]
    pub context_window: usize,
    #[serde(default)]
    pub shots: usize,
    /// Also run the verb swap and the reordered class list.
    #[serde(default)]
    pub variations: bool,
    /// With `variations`, also run every rotation of the class order.
    #[serde(default)]
    pub rotations: bool,
}

impl RunEntry {
    pub fn preset(preset: &str) -> Self {
        Self {
            preset: preset.to_string(),
            id: None,
            input_mode: None,
            asr_source: None,
            context_window: 0,
            shots: 0,
            variations: false,
            rotations: false,
        }
    }

    /// Explicit id, or the preset id with one suffix per override.
    pub fn run_id(&self) -> String {
        if let Some(id) = &self.id {
            return id.clone();
        }
        let mut id = self.preset.clone();
        if let Some(m) = self.input_mode {
            id.push_str(&format!("@{m}"));
        }
        if let Some(s) = &self.asr_source {
            id.push_str(&format!(":{s}"));
        }
        if self.context_window > 0 {
            id.push_str(&format!("+ctx{}", self.context_window));
        }
        if self.shots > 0 {
            id.push_str(&format!("+{}shot", self.shots));
        }
        id
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = read_text(path).map_err(|e| PipelineError::Config(e.to_string()))?;
        let cfg = Self::parse(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(cfg.resolved(base))
    }

    pub fn resolved(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus.manifest);
        if let Some(p) = &mut self.corpus.hypotheses {
            fix(p);
        }
        fix(&mut self.output.dir);
        for p in [
            &mut self.prompts.templates,
            &mut self.llm.cache_dir,
            &mut self.llm.mock_script,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        self
    }

    pub fn taxonomy(&self) -> Result<EmotionTaxonomy, PipelineError> {
        EmotionTaxonomy::preset(&self.corpus.taxonomy)
            .ok_or_else(|| PipelineError::Config(format!("unknown taxonomy {:?}", self.corpus.taxonomy)))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.taxonomy()?;
        self.llm
            .client
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let mut ids: Vec<String> = self.runs.iter().map(RunEntry::run_id).collect();
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(PipelineError::Config(format!("duplicate run id {:?}", w[0])));
        }
        if let Some(bad) = ids.iter().find(|id| id.contains('~') || id.contains('/')) {
            return Err(PipelineError::Config(format!(
                "run id {bad:?} may not contain '~' or '/'"
            )));
        }
        if self.runs.iter().any(|r| r.rotations && !r.variations) {
            return Err(PipelineError::Config("rotations requires variations = true".into()));
        }
        Ok(())
    }

    pub fn cache_dir(&self) -> Option<PathBuf> {
        match (&self.llm.cache_dir, self.llm.mode) {
            (Some(d), _) => Some(d.clone()),
            (None, LlmMode::Mock) => None,
            (None, _) => Some(self.output.dir.join("llm_cache")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let cfg = RunConfig::parse("[corpus]\nmanifest = \"m.jsonl\"\n").unwrap();
        assert_eq!(cfg.llm.mode, LlmMode::Replay);
        assert_eq!(cfg.llm.client.temperature, 1e-4);
        assert_eq!(cfg.eval.baseline, "1");
        assert!(cfg.runs.is_empty());
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"
[corpus]
manifest = "m.jsonl"
hypotheses = "h.jsonl"
taxonomy = "msp8"

[prompts]
seed = 7
asr_source = "asr3"

[llm]
mode = "mock"
mock_default = "neutral"

[llm.client]
model_name = "m"
parallelism = 2

[[run]]
preset = "r3"

[[run]]
preset = "1"
input_mode = "single_asr"
asr_source = "asr2"
context_window = 5
"#;
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.runs[1].run_id(), "1@single_asr:asr2+ctx5");
        assert_eq!(cfg.llm.client.max_tokens, 100);
        let back = RunConfig::parse(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = "[corpus]\nmanifest = \"m\"\n";
        assert!(RunConfig::parse(&format!("{base}taxonomy = \"x\"\n")).is_err());
        assert!(RunConfig::parse(&format!("{base}[[run]]\npreset = \"1\"\n[[run]]\npreset = \"1\"\n")).is_err());
        assert!(RunConfig::parse(&format!("{base}[llm.client]\nmax_tokens = 0\n")).is_err());
        assert!(RunConfig::parse(&format!("{base}[bogus]\n")).is_err());
        assert!(RunConfig::parse(&format!("{base}[[run]]\npreset = \"1\"\nid = \"a/b\"\n")).is_err());
    }

    #[test]
    fn paths_resolve_against_config_dir() {
        let cfg = RunConfig::parse("[corpus]\nmanifest = \"m.jsonl\"\n")
            .unwrap()
            .resolved(Path::new("/data/exp"));
        assert_eq!(cfg.corpus.manifest, Path::new("/data/exp/m.jsonl"));
        assert_eq!(cfg.output.dir, Path::new("/data/exp/out"));
        assert_eq!(cfg.cache_dir().unwrap(), Path::new("/data/exp/out/llm_cache"));
    }
}
