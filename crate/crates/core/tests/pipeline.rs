use std::fs;
use std::path::{Path, PathBuf};

use emoprompt::acoustics::{synth, write_wav};
use emoprompt::pipeline::{
    cmd_eval, cmd_extract, cmd_run, expand_runs, ErrorKind, Experiment, LlmMode, PipelineError,
    RunConfig, RunEntry,
};
use emoprompt::llmclient::LlmError;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/replay40/experiment.toml")
}

fn config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::load(&fixture()).unwrap();
    cfg.output.dir = out.to_path_buf();
    cfg
}

fn runs(ids: &[&str]) -> Vec<RunEntry> {
    ids.iter().map(|id| RunEntry::preset(id)).collect()
}

#[test]
fn extraction_rerun_recomputes_nothing() {
    let out = tempfile::tempdir().unwrap();
    let cfg = config(out.path());
    let first = cmd_extract(&cfg).unwrap();
    assert_eq!((first.computed, first.reused), (40, 0));
    assert!(first.failures.is_empty());
    let bytes = fs::read(&first.store).unwrap();
    let second = cmd_extract(&cfg).unwrap();
    assert_eq!((second.computed, second.reused), (0, 40));
    assert_eq!(fs::read(&second.store).unwrap(), bytes);
}

fn write_manifest(dir: &Path, n: usize, with_audio: bool) -> PathBuf {
    let labels = ["angry", "happy", "neutral", "sad"];
    let mut text = String::new();
    for i in 0..n {
        let audio = if with_audio {
            format!(r#","audio":"a{i}.wav""#)
        } else {
            String::new()
        };
        text.push_str(&format!(
            r#"{{"schema_version":1,"id":"u{i}","dialogue_id":"d{}","turn_index":{},"speaker_gender":"male","gold_transcript":"words number {i}","gold_label":"{}","duration_s":0.5{audio}}}"#,
            i / 5,
            i % 5,
            labels[i % 4]
        ));
        text.push('\n');
    }
    let path = dir.join("corpus.jsonl");
    fs::write(&path, text).unwrap();
    path
}

fn small_config(dir: &Path, manifest: PathBuf) -> RunConfig {
    let mut cfg = RunConfig::parse("[corpus]\nmanifest = \"x\"\n[llm]\nmode = \"mock\"\nmock_default = \"Sad.\"\n").unwrap();
    cfg.corpus.manifest = manifest;
    cfg.output.dir = dir.join("out");
    cfg.runs = runs(&["1"]);
    cfg
}

#[test]
fn corpus_without_audio_is_a_noop() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), write_manifest(dir.path(), 8, false));
    let s = cmd_extract(&cfg).unwrap();
    assert_eq!((s.computed, s.without_audio, s.failures.len()), (0, 8, 0));
    let r = cmd_run(&cfg, false).unwrap();
    assert_eq!(r.runs, vec![("1".to_string(), 8, 0)]);
}

#[test]
fn corrupt_audio_is_listed_and_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), 10, true);
    for i in 0..10 {
        let path = dir.path().join(format!("a{i}.wav"));
        if i == 4 {
            fs::write(&path, b"not a wav file").unwrap();
        } else {
            write_wav(&path, &synth::sine::<f64>(150.0 + 10.0 * i as f64, 0.3, 0.5, 8000)).unwrap();
        }
    }
    let cfg = small_config(dir.path(), manifest);
    let s = cmd_extract(&cfg).unwrap();
    assert_eq!(s.computed, 9);
    assert_eq!(s.failures.len(), 1);
    assert_eq!(s.failures[0].utterance_id, "u4");
}

#[test]
fn mock_run_replays_from_cache_without_calls() {
    let out = tempfile::tempdir().unwrap();
    let cache = out.path().join("fixtures");
    let mut cfg = config(&out.path().join("mock"));
    cfg.runs = runs(&["1", "3", "r3"]);
    cfg.llm.cache_dir = Some(cache.clone());
    let mock = cmd_run(&cfg, false).unwrap();
    assert_eq!(mock.backend_calls, 120);

    let mut replay = cfg.clone();
    replay.output.dir = out.path().join("replay");
    replay.llm.mode = LlmMode::Replay;
    let r = cmd_run(&replay, false).unwrap();
    assert_eq!((r.backend_calls, r.cached), (0, 120));
    assert_eq!(
        fs::read(&mock.predictions).unwrap(),
        fs::read(&r.predictions).unwrap()
    );
}

#[test]
fn replay_without_fixtures_is_a_data_error() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = config(out.path());
    cfg.runs = runs(&["1"]);
    cfg.llm.mode = LlmMode::Replay;
    let err = cmd_run(&cfg, false).unwrap_err();
    assert!(
        matches!(&err, PipelineError::Llm { source: LlmError::MissingFixture { .. }, .. }),
        "{err}"
    );
    assert_eq!(err.kind(), ErrorKind::Data);
}

#[test]
fn live_mode_needs_explicit_switch() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = config(out.path());
    cfg.runs = runs(&["1"]);
    cfg.llm.mode = LlmMode::Live;
    let err = cmd_run(&cfg, false).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Config);
    assert!(!out.path().join("predictions.jsonl").exists());
}

#[test]
fn r3_without_hypotheses_is_refused_before_any_call() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = config(out.path());
    cfg.corpus.hypotheses = None;
    cfg.runs = runs(&["1", "r3"]);
    cfg.llm.cache_dir = Some(out.path().join("cache"));
    let err = cmd_run(&cfg, false).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Data, "{err}");
    assert!(!out.path().join("predictions.jsonl").exists());
    assert!(!out.path().join("cache").exists());
}

#[test]
fn context_is_truncated_at_dialogue_start() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = config(out.path());
    let mut entry = RunEntry::preset("1");
    entry.context_window = 25;
    cfg.runs = vec![entry];
    let planned = expand_runs(&cfg, &cfg.taxonomy().unwrap()).unwrap();
    let exp = Experiment::load(&cfg, &planned).unwrap();
    let turns: Vec<_> = exp.corpus.dialogue("d1").collect();
    let first = exp.render(&planned[0], turns[0]).unwrap();
    assert!(!first.user_text.contains("Preceding utterances"));
    let third = exp.render(&planned[0], turns[2]).unwrap();
    for t in &turns[..2] {
        assert!(third.user_text.contains(&format!("- {}", t.gold_transcript)));
    }
    assert!(!third.user_text.contains(&format!("- {}", turns[2].gold_transcript)));
}

#[test]
fn predictions_do_not_depend_on_parallelism() {
    let mut outputs = Vec::new();
    for p in [1, 16] {
        let out = tempfile::tempdir().unwrap();
        let mut cfg = config(out.path());
        cfg.runs = runs(&["1", "2", "8"]);
        cfg.llm.client.parallelism = p;
        let s = cmd_run(&cfg, false).unwrap();
        outputs.push(fs::read(s.predictions).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn eval_skips_tables_without_runs() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = config(out.path());
    cfg.runs = runs(&["1", "3"]);
    cmd_run(&cfg, false).unwrap();
    let s = cmd_eval(&cfg).unwrap();
    assert_eq!(s.written.len(), 1);
    assert_eq!(s.skipped.len(), 5);
    let text = fs::read_to_string(&s.report).unwrap();
    assert!(text.contains("45.59 (+1.09)"), "{text}");
    assert!(text.contains("Table 4: R3 ablation: skipped"));
    let again = cmd_eval(&cfg).unwrap();
    assert_eq!(fs::read_to_string(again.report).unwrap(), text);
    assert!(out.path().join("run_meta.json").exists());
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("run_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["llm"]["client"]["temperature"], 1e-4);
    assert_eq!(meta["template_hashes"].as_object().unwrap().len(), 22);
}
