use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::extract::{cmd_extract, load_features, FeatureStore};
use super::{
    read_text, sha256_hex, write_atomic, write_json, LlmMode, PipelineError, RunConfig, RunEntry,
    ARTIFACT_SCHEMA_VERSION,
};
use crate::acoustics::describe;
use crate::corpus::{load_manifest, Corpus, EmotionTaxonomy, Utterance};
use crate::llmclient::{
    cache_key, Backend, ChatRequest, DiskCache, HttpBackend, LlmClient, LlmError, MockBackend,
    ReplayBackend,
};
use crate::parse::{parse_label, parse_r3, Prediction};
use crate::promptkit::{
    preset, render, select_shots, variations, Bundle, InputMode, KnowledgeBlock, PromptSpec,
    RenderedPrompt,
};
use crate::template::TemplateSet;
use crate::textmetrics::{
    linguistic_block, EditCounts, LinguisticEvidence, Wer, WerReference,
};

/// One concrete prompting run after preset lookup and variation expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedRun {
    pub run_id: String,
    pub entry: RunEntry,
    /// For variations, the run they were derived from.
    pub base_run: Option<String>,
    /// `spec.id` equals `run_id`.
    pub spec: PromptSpec,
}

/// Expands `[[run]]` entries into runs, variations following their base.
pub fn expand_runs(
    config: &RunConfig,
    taxonomy: &EmotionTaxonomy,
) -> Result<Vec<PlannedRun>, PipelineError> {
    let mut out = Vec::new();
    for entry in &config.runs {
        let run_id = entry.run_id();
        let mut spec = preset(&entry.preset, taxonomy)?;
        spec.id = run_id.clone();
        if let Some(m) = entry.input_mode {
            spec.input_mode = m;
        }
        spec.context_window = entry.context_window;
        spec.shots = entry.shots;
        spec.validate()?;
        let derived = if entry.variations {
            variations(&spec, entry.rotations)?
        } else {
            Vec::new()
        };
        out.push(PlannedRun {
            run_id: run_id.clone(),
            entry: entry.clone(),
            base_run: None,
            spec,
        });
        for v in derived {
            out.push(PlannedRun {
                run_id: v.id.clone(),
                entry: entry.clone(),
                base_run: Some(run_id.clone()),
                spec: v,
            });
        }
    }
    Ok(out)
}

/// Loaded inputs shared by every run.
pub struct Experiment {
    pub config: RunConfig,
    pub corpus: Corpus,
    pub templates: TemplateSet,
    pub features: Option<FeatureStore>,
}

fn needs_descriptors(runs: &[PlannedRun]) -> bool {
    runs.iter()
        .any(|r| r.spec.knowledge.iter().any(|b| b.needs_descriptors()))
}

impl Experiment {
    /// Loads corpus, hypotheses and templates. Features are extracted on
    /// demand when a run needs acoustic descriptors.
    pub fn load(config: &RunConfig, runs: &[PlannedRun]) -> Result<Self, PipelineError> {
        let taxonomy = config.taxonomy()?;
        let mut corpus = load_manifest(&config.corpus.manifest, &taxonomy)?;
        if let Some(h) = &config.corpus.hypotheses {
            corpus.load_hypotheses(h)?;
        }
        let templates = match &config.prompts.templates {
            Some(dir) => TemplateSet::with_overrides(dir)?,
            None => TemplateSet::builtin(),
        };
        let mut features = load_features(&config.output.dir)?;
        if features.is_none() && needs_descriptors(runs) {
            log::info!("no feature store yet; extracting");
            cmd_extract(config)?;
            features = load_features(&config.output.dir)?;
        }
        Ok(Self {
            config: config.clone(),
            corpus,
            templates,
            features,
        })
    }

    fn asr_source<'a>(&'a self, run: &'a PlannedRun) -> Option<&'a str> {
        run.entry
            .asr_source
            .as_deref()
            .or(self.config.prompts.asr_source.as_deref())
    }

    /// Transcript shown for `u` under `run`'s input mode.
    pub fn shown_transcript<'a>(
        &'a self,
        run: &PlannedRun,
        u: &'a Utterance,
    ) -> Result<&'a str, PipelineError> {
        let missing = |what: String| PipelineError::Data(format!("{}: {what}", run.run_id));
        match run.spec.input_mode {
            InputMode::GroundTruth => Ok(&u.gold_transcript),
            InputMode::SingleAsr | InputMode::Nbest => {
                let set = self
                    .corpus
                    .hypotheses(&u.id)
                    .ok_or_else(|| missing(format!("no hypotheses for utterance {:?}", u.id)))?;
                let source = match run.spec.input_mode {
                    InputMode::SingleAsr => self.asr_source(run),
                    _ => None,
                };
                match source {
                    None => Ok(&set.top().transcript),
                    Some(s) => set.by_source(s).map(|h| h.transcript.as_str()).ok_or_else(|| {
                        missing(format!("utterance {:?} has no hypothesis from {s:?}", u.id))
                    }),
                }
            }
        }
    }

    fn linguistic(&self, run: &PlannedRun, u: &Utterance) -> Result<Option<String>, PipelineError> {
        if !run.spec.has(KnowledgeBlock::AsrRelation) {
            return Ok(None);
        }
        let norm = &self.config.prompts.normalizer;
        let shown = self.shown_transcript(run, u)?;
        let shown_tokens = norm.tokens(shown);
        let reference = self.config.prompts.wer_reference;
        let wer = match reference {
            WerReference::Gold => norm.align_text(&u.gold_transcript, shown).wer(),
            WerReference::TopHypothesis => {
                // disagreement of the other hypotheses with the shown one
                let counts = self
                    .corpus
                    .hypotheses(&u.id)
                    .map(|set| {
                        set.hypotheses
                            .iter()
                            .filter(|h| h.transcript != shown)
                            .map(|h| norm.align_text(shown, &h.transcript).counts)
                            .fold(EditCounts::default(), |a, b| a + b)
                    })
                    .unwrap_or_default();
                if counts.reference_len == 0 {
                    Wer::EmptyReference
                } else {
                    Wer::Rate(counts.errors() as f64 / counts.reference_len as f64)
                }
            }
        };
        let evidence = LinguisticEvidence {
            wer,
            length_words: shown_tokens.len(),
            reference,
        };
        Ok(linguistic_block(&evidence, run.spec.input_mode, &self.templates)?)
    }

    fn shot_seed(&self, utterance_id: &str) -> u64 {
        let digest = sha256_hex(utterance_id.as_bytes());
        let mixed = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
        self.config.prompts.seed ^ mixed
    }

    /// Renders `run`'s prompt for `u`.
    pub fn render(&self, run: &PlannedRun, u: &Utterance) -> Result<RenderedPrompt, PipelineError> {
        let spec = &run.spec;
        let mut bundle = Bundle::new(u);
        if spec.input_mode == InputMode::SingleAsr {
            bundle.transcript = Some(self.shown_transcript(run, u)?);
        }
        bundle.hypotheses = self.corpus.hypotheses(&u.id);

        let descriptors = match (&self.features, spec.knowledge.iter().any(|b| b.needs_descriptors())) {
            (Some(store), true) => store
                .profiles
                .get(&u.id)
                .map(|p| describe(p, &store.calibration)),
            _ => None,
        };
        bundle.descriptors = descriptors.as_ref();

        let linguistic = self.linguistic(run, u)?;
        bundle.linguistic = linguistic.as_deref();

        if spec.context_window > 0 {
            let context = self
                .corpus
                .context_of(&u.id, spec.context_window)?
                .into_iter()
                .map(|c| self.shown_transcript(run, c).map(str::to_string))
                .collect::<Result<Vec<_>, _>>()?;
            bundle.context = Some(context);
        }
        if spec.shots > 0 {
            bundle.shots = Some(select_shots(
                &self.corpus,
                spec.shots,
                self.shot_seed(&u.id),
                &u.id,
            )?);
        }
        Ok(render(spec, &bundle, &self.templates)?)
    }
}

/// Renders every (run, utterance) prompt, failing on the first problem.
pub fn render_all(
    exp: &Experiment,
    runs: &[PlannedRun],
) -> Result<Vec<Vec<RenderedPrompt>>, PipelineError> {
    runs.iter()
        .map(|run| {
            exp.corpus
                .utterances()
                .iter()
                .map(|u| exp.render(run, u))
                .collect()
        })
        .collect()
}

/// One line of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub schema_version: u32,
    pub run_id: String,
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variation: Option<String>,
    pub utterance_id: String,
    pub gold_label: String,
    #[serde(flatten)]
    pub prediction: Prediction,
    pub raw_text: String,
    pub cache_key: String,
}

#[derive(Deserialize)]
struct ScriptLine {
    run: String,
    utterance_id: String,
    response: String,
}

fn load_script(path: &Path) -> Result<HashMap<String, String>, PipelineError> {
    let text = read_text(path)?;
    let mut script = HashMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let s: ScriptLine = serde_json::from_str(line).map_err(|e| PipelineError::Json {
            path: path.to_path_buf(),
            msg: format!("line {}: {e}", i + 1),
        })?;
        script.insert(format!("{}/{}", s.run, s.utterance_id), s.response);
    }
    Ok(script)
}

/// Client for the configured mode. Live mode needs `allow_live`.
pub fn build_client(config: &RunConfig, allow_live: bool) -> Result<LlmClient, PipelineError> {
    let llm = &config.llm;
    let backend: Box<dyn Backend> = match llm.mode {
        LlmMode::Replay => Box::new(ReplayBackend),
        LlmMode::Mock => {
            let script = match &llm.mock_script {
                Some(p) => load_script(p)?,
                None => HashMap::new(),
            };
            if script.is_empty() && llm.mock_default.is_none() {
                return Err(PipelineError::Config(
                    "mock mode needs llm.mock_script or llm.mock_default".into(),
                ));
            }
            Box::new(MockBackend::scripted(script, llm.mock_default.clone()))
        }
        LlmMode::Live => {
            if !allow_live {
                return Err(PipelineError::Config(
                    "llm.mode = \"live\" also requires the --live switch".into(),
                ));
            }
            if std::env::var(&llm.client.api_key_env).map_or(true, |v| v.is_empty()) {
                return Err(PipelineError::Config(format!(
                    "live mode requires the {} environment variable",
                    llm.client.api_key_env
                )));
            }
            Box::new(HttpBackend::new(&llm.client).map_err(|e| PipelineError::Config(e.to_string()))?)
        }
    };
    let cache = config
        .cache_dir()
        .map(|d| DiskCache::open(&d))
        .transpose()
        .map_err(|e| PipelineError::Llm {
            context: "opening cache".into(),
            source: e,
        })?;
    LlmClient::new(backend, cache, llm.client.clone()).map_err(|e| PipelineError::Config(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    /// `(run id, predictions, fallbacks)`.
    pub runs: Vec<(String, usize, usize)>,
    pub cached: usize,
    pub backend_calls: usize,
    pub predictions: PathBuf,
}

pub fn predictions_path(out: &Path) -> PathBuf {
    out.join("predictions.jsonl")
}

#[derive(Serialize)]
struct RunMeta<'a> {
    schema_version: u32,
    tool_version: &'static str,
    config: &'a RunConfig,
    runs: &'a [PlannedRun],
    template_digest: String,
    template_hashes: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
    decoding: BTreeMap<&'static str, String>,
}

fn write_meta(exp: &Experiment, runs: &[PlannedRun]) -> Result<(), PipelineError> {
    let cfg = &exp.config;
    let mut inputs = BTreeMap::new();
    let mut files = vec![("manifest", cfg.corpus.manifest.clone())];
    files.extend(cfg.corpus.hypotheses.clone().map(|h| ("hypotheses", h)));
    files.extend(cfg.llm.mock_script.clone().map(|s| ("mock_script", s)));
    for (name, path) in files {
        let bytes = std::fs::read(&path).map_err(super::io_err(&path))?;
        inputs.insert(format!("{name}_sha256"), sha256_hex(&bytes));
    }
    if let Some(store) = &exp.features {
        inputs.insert(
            "features_sha256".into(),
            sha256_hex(serde_json::to_string(store).unwrap_or_default().as_bytes()),
        );
    }
    let decoding = [
        ("temperature", cfg.llm.client.temperature.to_string()),
        ("max_tokens", cfg.llm.client.max_tokens.to_string()),
        ("other_parameters", "backend defaults".to_string()),
    ]
    .into_iter()
    .collect();
    let meta = RunMeta {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        runs,
        template_digest: exp.templates.digest(),
        template_hashes: exp.templates.hashes(),
        inputs,
        decoding,
    };
    write_json(&cfg.output.dir.join("run_meta.json"), &meta)
}

fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<(), PipelineError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Renders, completes and parses every (run, utterance) pair.
///
/// All prompts are rendered before the first LLM call, so missing inputs
/// and template errors abort before any request. Responses are cached as
/// they arrive and `predictions.jsonl` is rewritten after each run, so a
/// rerun after a transport failure resumes where it stopped.
pub fn cmd_run(config: &RunConfig, allow_live: bool) -> Result<RunSummary, PipelineError> {
    let taxonomy = config.taxonomy()?;
    let runs = expand_runs(config, &taxonomy)?;
    if runs.is_empty() {
        return Err(PipelineError::Config("no [[run]] entries".into()));
    }
    let exp = Experiment::load(config, &runs)?;
    let prompts = render_all(&exp, &runs)?;
    let client = build_client(config, allow_live)?;
    write_meta(&exp, &runs)?;

    let path = predictions_path(&config.output.dir);
    let mut records = Vec::new();
    let mut summary = RunSummary {
        runs: Vec::new(),
        cached: 0,
        backend_calls: 0,
        predictions: path.clone(),
    };
    for (run, run_prompts) in runs.iter().zip(&prompts) {
        log::info!("run {}: {} prompts", run.run_id, run_prompts.len());
        let responses = client.batch(run_prompts, config.llm.fail_fast);
        let mut fallbacks = 0;
        for ((u, prompt), resp) in exp.corpus.utterances().iter().zip(run_prompts).zip(responses) {
            let resp = resp.map_err(|source: LlmError| PipelineError::Llm {
                context: format!("{}/{}", run.run_id, u.id),
                source,
            })?;
            summary.cached += usize::from(resp.cached);
            let prediction = if run.spec.reasoning || run.spec.aec {
                parse_r3(&resp.raw_text, &taxonomy)
            } else {
                parse_label(&resp.raw_text, &taxonomy)
            };
            fallbacks += usize::from(prediction.fallback_applied);
            records.push(PredictionRecord {
                schema_version: ARTIFACT_SCHEMA_VERSION,
                run_id: run.run_id.clone(),
                preset: run.entry.preset.clone(),
                variation: run.spec.variation.clone(),
                utterance_id: u.id.clone(),
                gold_label: u.gold_label.clone(),
                prediction,
                raw_text: resp.raw_text,
                cache_key: cache_key(&ChatRequest::new(prompt, client.config())),
            });
        }
        write_predictions(&path, &records)?;
        summary
            .runs
            .push((run.run_id.clone(), run_prompts.len(), fallbacks));
    }
    summary.backend_calls = client.backend().calls();
    Ok(summary)
}

/// Reads `predictions.jsonl` from the output directory.
pub fn load_predictions(out: &Path) -> Result<Vec<PredictionRecord>, PipelineError> {
    let path = predictions_path(out);
    let text = read_text(&path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let r: PredictionRecord = serde_json::from_str(l).map_err(|e| PipelineError::Json {
                path: path.clone(),
                msg: format!("line {}: {e}", i + 1),
            })?;
            if r.schema_version != ARTIFACT_SCHEMA_VERSION {
                return Err(PipelineError::Data(format!(
                    "{}: line {}: unsupported schema_version {}",
                    path.display(),
                    i + 1,
                    r.schema_version
                )));
            }
            Ok(r)
        })
        .collect()
}
