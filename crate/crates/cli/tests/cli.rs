use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/replay40/experiment.toml")
}

fn emoprompt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emoprompt"))
        .args(args)
        .env_remove("EMOPROMPT_API_KEY")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn missing_config_exits_with_config_code() {
    let o = emoprompt(&["run", "-c", "/nonexistent/experiment.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[corpus]\nmanifest = 3\n").unwrap();
    let o = emoprompt(&["eval", "-c", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

/// Copy of the fixture config in `dir` with `mode` swapped and paths made absolute.
fn config_with_mode(dir: &Path, mode: &str) -> PathBuf {
    let fixture_dir = fixture().parent().unwrap().canonicalize().unwrap();
    let mut text = fs::read_to_string(fixture())
        .unwrap()
        .replace("mode = \"mock\"", &format!("mode = \"{mode}\""));
    for file in ["corpus.jsonl", "hypotheses.jsonl", "mock_script.jsonl"] {
        text = text.replace(&format!("\"{file}\""), &format!("{:?}", fixture_dir.join(file)));
    }
    let cfg = dir.join(format!("{mode}.toml"));
    fs::write(&cfg, text).unwrap();
    cfg
}

#[test]
fn replay_without_fixtures_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_with_mode(dir.path(), "replay");
    let o = emoprompt(&["run", "-c", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("out/predictions.jsonl").exists());
}

#[test]
fn live_mode_without_flag_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_with_mode(dir.path(), "live");
    let o = emoprompt(&["run", "-c", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn live_flag_without_credential_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_with_mode(dir.path(), "live");
    let o = emoprompt(&["run", "-c", cfg.to_str().unwrap(), "--live"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn run_then_eval_prints_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = fixture();
    let cfg = cfg.to_str().unwrap();
    let run = emoprompt(&["run", "-c", cfg, "--out", out]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout(&run).contains("r3: 40 predictions"));
    let eval = emoprompt(&["eval", "-c", cfg, "--out", out]);
    assert!(eval.status.success());
    let expected = fs::read_to_string(fixture().parent().unwrap().join("expected/tables.txt")).unwrap();
    assert_eq!(stdout(&eval), expected);
}

#[test]
fn variations_lists_single_hop_edits() {
    let o = emoprompt(&["variations", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "1\tPredict\tA, H, N, S");
    assert!(lines.contains(&"1~verb:select\tSelect\tA, H, N, S"));
    assert!(lines.contains(&"1~order:hnas\tPredict\tH, N, A, S"));
    assert_eq!(emoprompt(&["variations", "nope"]).status.code(), Some(2));
}

#[test]
fn prompts_dump_renders_without_calls() {
    let dir = tempfile::tempdir().unwrap();
    let o = emoprompt(&[
        "prompts",
        "dump",
        "--out",
        dir.path().to_str().unwrap(),
        "-c",
        fixture().to_str().unwrap(),
        "--run",
        "r3",
        "--utterance",
        "u01",
        "--format",
        "jsonl",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
    assert_eq!(v["prompt_id"], "r3");
    assert!(v["system_text"].as_str().unwrap().contains("error corrector"));
}

#[test]
fn templates_are_exported() {
    let dir = tempfile::tempdir().unwrap();
    let o = emoprompt(&["prompts", "templates", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 22);
}
