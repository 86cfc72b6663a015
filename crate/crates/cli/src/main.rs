use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use emoprompt::corpus::EmotionTaxonomy;
use emoprompt::pipeline::{
    cmd_eval, cmd_extract, cmd_run, expand_runs, render_all, ErrorKind, Experiment, PipelineError,
    RunConfig,
};
use emoprompt::promptkit::{describe_order, preset, variations};
use emoprompt::template::TemplateSet;

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_TRANSPORT: u8 = 4;

#[derive(Parser)]
#[command(name = "emoprompt", version, about = "LLM prompting experiments for speech emotion recognition")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, PipelineError> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute acoustic profiles and the corpus calibration.
    Extract(ConfigArgs),
    /// Render, complete and parse every configured run.
    Run {
        #[command(flatten)]
        args: ConfigArgs,
        /// Allow requests to the live endpoint (config must also say mode = "live").
        #[arg(long)]
        live: bool,
    },
    /// Score predictions and write the report tables.
    Eval(ConfigArgs),
    /// Prompt inspection.
    Prompts {
        #[command(subcommand)]
        command: PromptsCommand,
    },
    /// List the variations generated for a preset.
    Variations {
        /// Preset id, e.g. 1 or r3.
        preset: String,
        #[arg(long, default_value = "iemocap4")]
        taxonomy: String,
        /// Include every rotation of the class order.
        #[arg(long)]
        rotations: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DumpFormat {
    Text,
    Jsonl,
}

#[derive(Subcommand)]
enum PromptsCommand {
    /// Render every (run, utterance) prompt without calling a model.
    Dump {
        #[command(flatten)]
        args: ConfigArgs,
        /// Only this run id.
        #[arg(long)]
        run: Option<String>,
        /// Only this utterance id.
        #[arg(long)]
        utterance: Option<String>,
        #[arg(long, value_enum, default_value = "text")]
        format: DumpFormat,
    },
    /// Write the built-in templates to a directory for editing.
    Templates { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = match e.downcast_ref::<PipelineError>().map(PipelineError::kind) {
                Some(ErrorKind::Transport) => EXIT_TRANSPORT,
                Some(ErrorKind::Data) => EXIT_DATA,
                Some(ErrorKind::Config) | None => EXIT_CONFIG,
            };
            ExitCode::from(code)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Extract(args) => {
            let cfg = args.load()?;
            let s = cmd_extract(&cfg)?;
            println!(
                "profiles: {} computed, {} reused, {} without audio, {} failed",
                s.computed,
                s.reused,
                s.without_audio,
                s.failures.len()
            );
            for f in &s.failures {
                println!("  failed {}: {}", f.utterance_id, f.error);
            }
            println!("wrote {}", s.store.display());
        }
        Command::Run { args, live } => {
            let cfg = args.load()?;
            let s = cmd_run(&cfg, live)?;
            for (id, n, fallbacks) in &s.runs {
                println!("{id}: {n} predictions, {fallbacks} fallbacks");
            }
            println!(
                "{} responses from cache, {} backend calls; wrote {}",
                s.cached,
                s.backend_calls,
                s.predictions.display()
            );
        }
        Command::Eval(args) => {
            let cfg = args.load()?;
            let s = cmd_eval(&cfg)?;
            print!("{}", std::fs::read_to_string(&s.report).context("reading report")?);
        }
        Command::Prompts {
            command: PromptsCommand::Dump {
                args,
                run,
                utterance,
                format,
            },
        } => dump(&args.load()?, run.as_deref(), utterance.as_deref(), format)?,
        Command::Prompts {
            command: PromptsCommand::Templates { dir },
        } => {
            TemplateSet::builtin()
                .export(&dir)
                .with_context(|| format!("writing templates to {}", dir.display()))?;
            println!("wrote templates to {}", dir.display());
        }
        Command::Variations {
            preset: id,
            taxonomy,
            rotations,
        } => {
            let tax = EmotionTaxonomy::preset(&taxonomy)
                .ok_or_else(|| PipelineError::Config(format!("unknown taxonomy {taxonomy:?}")))?;
            let base = preset(&id, &tax).map_err(PipelineError::from)?;
            println!("{}\t{}\t{}", base.id, base.verb.word(), describe_order(&base.class_order));
            for v in variations(&base, rotations).map_err(PipelineError::from)? {
                println!("{}\t{}\t{}", v.id, v.verb.word(), describe_order(&v.class_order));
            }
        }
    }
    Ok(())
}

fn dump(cfg: &RunConfig, run: Option<&str>, utterance: Option<&str>, format: DumpFormat) -> Result<()> {
    let taxonomy = cfg.taxonomy()?;
    let mut runs = expand_runs(cfg, &taxonomy)?;
    if let Some(id) = run {
        runs.retain(|r| r.run_id == id);
        if runs.is_empty() {
            return Err(PipelineError::Config(format!("no run {id:?} in config")).into());
        }
    }
    let exp = Experiment::load(cfg, &runs)?;
    let prompts = render_all(&exp, &runs)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for p in prompts.iter().flatten() {
        if utterance.is_some_and(|u| u != p.utterance_id) {
            continue;
        }
        match format {
            DumpFormat::Jsonl => writeln!(out, "{}", serde_json::to_string(p)?)?,
            DumpFormat::Text => writeln!(
                out,
                "=== {} / {} ===\n[system]\n{}\n[user]\n{}\n",
                p.prompt_id, p.utterance_id, p.system_text, p.user_text
            )?,
        }
    }
    Ok(())
}
