//! `teachsize` command line.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use teachsize::learner::LearnerRegistry;
use teachsize::pipeline::{Experiment, ExperimentConfig, PhaseSummary, RunOptions};
use teachsize::render::Modality;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModalityArg {
    Bitmap,
    Coordinates,
    Both,
}

impl ModalityArg {
    fn selected(self) -> Option<Vec<Modality>> {
        match self {
            ModalityArg::Bitmap => Some(vec![Modality::Bitmap]),
            ModalityArg::Coordinates => Some(vec![Modality::Coordinates]),
            ModalityArg::Both => None,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "teachsize", version, about = "Teaching-size experiments on sketch drawings")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, short, global = true, default_value = "experiment.toml")]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated learner names to run.
    #[arg(long, global = true, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long, global = true, value_enum, default_value = "both")]
    modality: ModalityArg,
    /// Discard cached answers and progress of the phase.
    #[arg(long, global = true)]
    fresh: bool,
    /// Count prompts without calling any learner.
    #[arg(long, global = true)]
    dry_run: bool,
    /// More log output (-v info, -vv debug).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample drawings per concept and write them to the output directory.
    Ingest,
    /// Drawing selection phase.
    Select,
    /// Teaching-size phase.
    Teach,
    /// Rewrite reports from the caches.
    Report,
    /// Check the config without running anything.
    ValidateConfig,
}

fn print_phase(s: &PhaseSummary) {
    let verb = if s.dry_run { "would issue" } else { "planned" };
    println!(
        "{}: {} task(s), {verb} {} prompt(s), {} cached, {} learner call(s), {} failure(s){}",
        s.phase,
        s.tasks,
        s.prompts_planned,
        s.cached,
        s.learner_calls,
        s.failures,
        if s.completed { ", complete" } else { "" }
    );
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = ExperimentConfig::load(&cli.config)
        .with_context(|| format!("loading {}", cli.config.display()))?;
    let opts = RunOptions {
        seed: cli.seed,
        models: cli.models.clone(),
        modalities: cli.modality.selected(),
        fresh: cli.fresh,
        dry_run: cli.dry_run,
    };
    let registry = LearnerRegistry::with_builtin();
    let exp = Experiment::new(cfg, &registry, &opts)?;
    let out = exp.layout().root.display().to_string();
    match cli.command {
        Command::ValidateConfig => {
            for l in &exp.config().learners {
                if let Some(var) = &l.api_key_env {
                    if std::env::var_os(var).is_none() {
                        log::warn!("learner `{}`: environment variable `{var}` is not set", l.name);
                    }
                }
            }
            println!("config ok ({})", exp.config().config_hash());
        }
        Command::Ingest => {
            let s = exp.ingest()?;
            println!(
                "{} record(s) read, {} outside concept set, {} unrecognized",
                s.records, s.skipped_unknown_concept, s.skipped_unrecognized
            );
            for (c, (available, sampled)) in &s.concepts {
                println!("{c}: {sampled} sampled of {available}");
            }
        }
        Command::Select => {
            print_phase(&exp.select(&opts)?);
            if !opts.dry_run {
                println!("reports written to {out}/reports");
            }
        }
        Command::Teach => {
            print_phase(&exp.teach(&opts)?);
            if !opts.dry_run {
                println!("reports written to {out}/reports");
            }
        }
        Command::Report => {
            let s = exp.report()?;
            for (m, summary) in &s.modalities {
                println!(
                    "{m}: {} identified row(s), mean TS {}",
                    summary.identified_rows,
                    summary.mean_ts_rows.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into())
                );
            }
            println!("reports written to {out}/reports");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
