use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;

use super::run::{expand_runs, load_predictions, Experiment, PlannedRun, PredictionRecord};
use super::{write_atomic, write_json, PipelineError, RunConfig, ARTIFACT_SCHEMA_VERSION};
use crate::corpus::EmotionTaxonomy;
use crate::eval::{
    delta_table, majority_vote, score, score_with_fallbacks, sensitivity_report, DeltaTable,
    EvalReport, SensitivityReport, TextTable,
};
use crate::promptkit::{describe_order, InputMode};
use crate::textmetrics::corpus_wer;

const TABLE2_IDS: [&str; 11] = ["1", "2", "3", "4", "5", "6", "7", "8", "9", "4+5+8", "4+5+6+8"];
const SINGLE_IDS: [&str; 9] = ["1", "2", "3", "4", "5", "6", "7", "8", "9"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalSummary {
    pub report: PathBuf,
    pub written: Vec<String>,
    pub skipped: Vec<String>,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TableJson {
    WerSweep { title: String, rows: Vec<WerRow> },
    Delta(DeltaTable),
    Sensitivity(SensitivityReport),
}

#[derive(Serialize)]
struct WerRow {
    run_id: String,
    input: String,
    wer_pct: f64,
    value_pct: f64,
}

struct Ctx<'a> {
    config: &'a RunConfig,
    taxonomy: &'a EmotionTaxonomy,
    runs: &'a [PlannedRun],
    reports: &'a BTreeMap<String, EvalReport>,
    records: &'a BTreeMap<String, Vec<&'a PredictionRecord>>,
}

impl Ctx<'_> {
    fn run(&self, id: &str) -> Option<&PlannedRun> {
        self.runs.iter().find(|r| r.run_id == id)
    }

    fn report(&self, id: &str) -> Option<&EvalReport> {
        self.reports.get(id)
    }

    /// A run is "plain" when it is the preset itself without overrides.
    fn plain(&self, id: &str) -> Option<(&PlannedRun, &EvalReport)> {
        let run = self.run(id)?;
        (run.entry.preset == id && run.base_run.is_none()).then_some(())?;
        Some((run, self.report(id)?))
    }
}

type Table = Result<(String, TableJson), String>;

fn table1(ctx: &Ctx<'_>, exp: &Experiment) -> Table {
    let title = "Table 1: UA by transcript source";
    let base_preset = ctx
        .run(&ctx.config.eval.baseline)
        .map(|r| r.entry.preset.clone())
        .unwrap_or_else(|| ctx.config.eval.baseline.clone());
    let norm = &ctx.config.prompts.normalizer;
    let mut rows = Vec::new();
    for run in ctx.runs {
        let eligible = run.base_run.is_none()
            && run.entry.preset == base_preset
            && run.spec.context_window == 0
            && run.spec.shots == 0
            && run.spec.input_mode != InputMode::Nbest;
        let Some(report) = ctx.report(&run.run_id).filter(|_| eligible) else {
            continue;
        };
        let wer = match run.spec.input_mode {
            InputMode::GroundTruth => 0.0,
            _ => {
                let pairs: Result<Vec<_>, _> = exp
                    .corpus
                    .utterances()
                    .iter()
                    .map(|u| {
                        exp.shown_transcript(run, u)
                            .map(|t| (norm.tokens(&u.gold_transcript), norm.tokens(t)))
                    })
                    .collect();
                match pairs.ok().and_then(|p| corpus_wer(&p).ok()) {
                    Some(w) => w,
                    None => continue,
                }
            }
        };
        let input = match run.spec.input_mode {
            InputMode::GroundTruth => "ground truth".to_string(),
            _ => run
                .entry
                .asr_source
                .clone()
                .or_else(|| ctx.config.prompts.asr_source.clone())
                .unwrap_or_else(|| "top hypothesis".into()),
        };
        rows.push(WerRow {
            run_id: run.run_id.clone(),
            input,
            wer_pct: wer,
            value_pct: report.metric(ctx.config.eval.metric),
        });
    }
    if !rows.iter().any(|r| r.input != "ground truth") {
        return Err(format!("{title}: skipped, no single-ASR runs of preset {base_preset:?}"));
    }
    rows.sort_by(|a, b| a.wer_pct.total_cmp(&b.wer_pct).then_with(|| a.run_id.cmp(&b.run_id)));
    let table = TextTable {
        headers: vec!["run".into(), "input".into(), "WER (%)".into(), "UA (%)".into()],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.run_id.clone(),
                    r.input.clone(),
                    format!("{:.2}", r.wer_pct),
                    format!("{:.2}", r.value_pct),
                ]
            })
            .collect(),
    };
    Ok((
        format!("{title}\n{}", table.render()),
        TableJson::WerSweep {
            title: title.into(),
            rows,
        },
    ))
}

fn vote_report(ctx: &Ctx<'_>, ids: &[&str]) -> Option<EvalReport> {
    let runs: Vec<&Vec<&PredictionRecord>> = ids.iter().filter_map(|id| ctx.records.get(*id)).collect();
    let first = runs.first()?;
    let pairs: Option<Vec<(String, String)>> = first
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let votes: Option<Vec<&str>> = runs
                .iter()
                .map(|r| {
                    r.get(i)
                        .filter(|x| x.utterance_id == rec.utterance_id)
                        .map(|x| x.prediction.label.as_str())
                })
                .collect();
            Some((rec.gold_label.clone(), majority_vote(votes?, ctx.taxonomy)))
        })
        .collect();
    score(&pairs?, ctx.taxonomy).ok()
}

fn table2(ctx: &Ctx<'_>) -> Table {
    let title = "Table 2: prompt ablation";
    let baseline = &ctx.config.eval.baseline;
    let mut rows: Vec<(String, String, EvalReport)> = TABLE2_IDS
        .iter()
        .filter_map(|id| ctx.plain(id))
        .map(|(run, rep)| (run.run_id.clone(), run.spec.label.clone(), rep.clone()))
        .collect();
    if !rows.iter().any(|(id, _, _)| id == baseline) {
        return Err(format!("{title}: skipped, baseline run {baseline:?} missing"));
    }
    if rows.len() < 2 {
        return Err(format!("{title}: skipped, need the baseline and at least one other preset"));
    }
    if ctx.config.eval.majority_vote {
        let singles: Vec<&str> = SINGLE_IDS.iter().copied().filter(|id| ctx.plain(id).is_some()).collect();
        if singles.len() >= 2 {
            if let Some(r) = vote_report(ctx, &singles) {
                rows.push(("vote".into(), format!("Majority voting ({})", singles.join(", ")), r));
            }
        }
    }
    let refs: Vec<(String, String, &EvalReport)> =
        rows.iter().map(|(a, b, r)| (a.clone(), b.clone(), r)).collect();
    let t = delta_table(title, &refs, baseline, ctx.config.eval.metric).map_err(|e| e.to_string())?;
    Ok((t.render(), TableJson::Delta(t)))
}

fn ablation(ctx: &Ctx<'_>, title: &str, baseline: &str, others: &[&str]) -> Table {
    let rows: Vec<(String, String, &EvalReport)> = std::iter::once(baseline)
        .chain(others.iter().copied())
        .filter_map(|id| ctx.plain(id))
        .map(|(run, rep)| (run.run_id.clone(), run.spec.label.clone(), rep))
        .collect();
    if ctx.plain(baseline).is_none() || rows.len() < 2 {
        return Err(format!(
            "{title}: skipped, needs run {baseline:?} and one of {}",
            others.join(", ")
        ));
    }
    let t = delta_table(title, &rows, baseline, ctx.config.eval.metric).map_err(|e| e.to_string())?;
    Ok((t.render(), TableJson::Delta(t)))
}

fn scheme_label(run: &PlannedRun) -> String {
    match (run.spec.context_window, run.spec.shots) {
        (0, 0) => "zero-shot".into(),
        (c, 0) => format!("context {c}"),
        (0, s) => format!("{s}-shot"),
        (c, s) => format!("context {c} + {s}-shot"),
    }
}

fn table5(ctx: &Ctx<'_>) -> Vec<Table> {
    let title = "Table 5: context-aware and in-context learning";
    let mut presets: Vec<&str> = Vec::new();
    for run in ctx.runs {
        let scheme = run.spec.context_window > 0 || run.spec.shots > 0;
        if scheme && run.base_run.is_none() && !presets.contains(&run.entry.preset.as_str()) {
            presets.push(&run.entry.preset);
        }
    }
    if presets.is_empty() {
        return vec![Err(format!("{title}: skipped, no context or few-shot runs"))];
    }
    presets
        .into_iter()
        .map(|p| {
            let t = format!("{title} (preset {p})");
            let Some((base, base_rep)) = ctx.plain(p) else {
                return Err(format!("{t}: skipped, zero-shot run {p:?} missing"));
            };
            let mut rows = vec![(base.run_id.clone(), scheme_label(base), base_rep)];
            for run in ctx.runs {
                if run.entry.preset == p
                    && run.base_run.is_none()
                    && run.spec.input_mode == base.spec.input_mode
                    && (run.spec.context_window > 0 || run.spec.shots > 0)
                {
                    if let Some(r) = ctx.report(&run.run_id) {
                        rows.push((run.run_id.clone(), scheme_label(run), r));
                    }
                }
            }
            if rows.len() < 2 {
                return Err(format!("{t}: skipped, no scored context or few-shot runs"));
            }
            let table = delta_table(&t, &rows, &base.run_id, ctx.config.eval.metric)
                .map_err(|e| e.to_string())?;
            Ok((table.render(), TableJson::Delta(table)))
        })
        .collect()
}

fn variation_label(run: &PlannedRun) -> String {
    format!("{} / {}", run.spec.verb.word(), describe_order(&run.spec.class_order))
}

fn table6(ctx: &Ctx<'_>) -> Vec<Table> {
    let title = "Table 6: prompt variations";
    let bases: Vec<&PlannedRun> = ctx
        .runs
        .iter()
        .filter(|r| r.base_run.is_none() && r.entry.variations)
        .collect();
    if bases.is_empty() {
        return vec![Err(format!("{title}: skipped, no runs with variations"))];
    }
    bases
        .into_iter()
        .map(|base| {
            let t = format!("{title} (run {})", base.run_id);
            let reports: BTreeMap<String, EvalReport> = ctx
                .runs
                .iter()
                .filter(|r| r.run_id == base.run_id || r.base_run.as_deref() == Some(&base.run_id))
                .filter_map(|r| Some((variation_label(r), ctx.report(&r.run_id)?.clone())))
                .collect();
            if reports.len() < 2 {
                return Err(format!("{t}: skipped, fewer than two scored variations"));
            }
            let s = sensitivity_report(&t, &reports, ctx.config.eval.metric);
            Ok((s.render(), TableJson::Sensitivity(s)))
        })
        .collect()
}

#[derive(Serialize)]
struct ScoresFile<'a> {
    schema_version: u32,
    metric: crate::eval::Metric,
    reports: &'a BTreeMap<String, EvalReport>,
}

#[derive(Serialize)]
struct TablesFile {
    schema_version: u32,
    tables: Vec<TableJson>,
    skipped: Vec<String>,
}

/// Scores every run in `predictions.jsonl` and writes report artifacts to
/// `<output>/reports/`: `scores.json`, `tables.json`, `tables.txt` and
/// `confusion.txt`. Tables whose runs are missing are skipped with a notice.
pub fn cmd_eval(config: &RunConfig) -> Result<EvalSummary, PipelineError> {
    let taxonomy = config.taxonomy()?;
    let runs = expand_runs(config, &taxonomy)?;
    let all = load_predictions(&config.output.dir)?;
    let mut records: BTreeMap<String, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in &all {
        records.entry(r.run_id.clone()).or_default().push(r);
    }
    let mut reports = BTreeMap::new();
    for (id, recs) in &records {
        let items = recs.iter().map(|r| {
            (
                r.gold_label.as_str(),
                r.prediction.label.as_str(),
                r.prediction.fallback_applied,
            )
        });
        reports.insert(id.clone(), score_with_fallbacks(items, &taxonomy)?);
    }
    let ctx = Ctx {
        config,
        taxonomy: &taxonomy,
        runs: &runs,
        reports: &reports,
        records: &records,
    };
    // table 1 needs transcripts; features are not required
    let exp = Experiment::load(config, &[])?;

    let mut tables = vec![table1(&ctx, &exp), table2(&ctx)];
    tables.push(ablation(&ctx, "Table 3: paralinguistic ablation", "4", &["4-basic"]));
    tables.push(ablation(&ctx, "Table 4: R3 ablation", "r3", &["r3-no-aec", "r3-no-reasoning"]));
    tables.extend(table5(&ctx));
    tables.extend(table6(&ctx));

    let mut text = String::new();
    let mut json = Vec::new();
    let mut written = Vec::new();
    let mut skipped = Vec::new();
    for t in tables {
        match t {
            Ok((rendered, j)) => {
                written.push(rendered.lines().next().unwrap_or_default().to_string());
                text.push_str(&rendered);
                json.push(j);
            }
            Err(notice) => {
                log::warn!("{notice}");
                text.push_str(&notice);
                text.push('\n');
                skipped.push(notice);
            }
        }
        text.push('\n');
    }

    let mut confusion = String::new();
    for (id, r) in &reports {
        confusion.push_str(&format!(
            "run {id}: n={} UA={:.2} fallbacks={}\n{}\n",
            r.n,
            r.ua_pct,
            r.fallback_count,
            r.render_confusion()
        ));
    }

    let dir = config.output.dir.join("reports");
    write_json(
        &dir.join("scores.json"),
        &ScoresFile {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            metric: config.eval.metric,
            reports: &reports,
        },
    )?;
    write_json(
        &dir.join("tables.json"),
        &TablesFile {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            tables: json,
            skipped: skipped.clone(),
        },
    )?;
    write_atomic(&dir.join("confusion.txt"), confusion.as_bytes())?;
    let report = dir.join("tables.txt");
    write_atomic(&report, text.as_bytes())?;
    Ok(EvalSummary {
        report,
        written,
        skipped,
    })
}
