use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use zoo3d_cli::config::{Overrides, PromptMode, RunConfig};
use zoo3d_cli::{decode, eval, exit_code, matching, selfcheck, synth, EXIT_VALIDATION};

#[derive(Parser)]
#[command(
    name = "zoo3d",
    version,
    about = "Multi-animal scene synthesis, matching, decoding and evaluation"
)]
struct Cli {
    /// JSON run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Template file instead of the generated toy template.
    #[arg(long, global = true)]
    template: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an annotated scene corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        num_scenes: Option<u64>,
        #[arg(long)]
        min_animals: Option<usize>,
        #[arg(long)]
        max_animals: Option<usize>,
    },
    /// Score predictions against annotations.
    Eval {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assign predictions to annotations scene by scene.
    Match {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Check small scenes against brute-force enumeration.
        #[arg(long)]
        verify: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the toy decoder on annotated scenes and write predictions.
    Decode {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Decoder weight file; seeded random weights otherwise.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        slots: Option<usize>,
        #[arg(long, value_enum)]
        prompts: Option<PromptMode>,
        #[arg(long)]
        prompts_file: Option<PathBuf>,
        /// Apply prompt dropout.
        #[arg(long)]
        train_mode: bool,
    },
    /// Run the oracle and invariant suites.
    Selfcheck {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut o = Overrides {
        seed: cli.seed,
        template: cli.template,
        ..Overrides::default()
    };
    match cli.command {
        Command::Synth {
            out,
            num_scenes,
            min_animals,
            max_animals,
        } => {
            o.num_scenes = num_scenes;
            o.min_animals = min_animals;
            o.max_animals = max_animals;
            let config = RunConfig::resolve(cli.config.as_deref(), &o)?;
            let summary = synth::run(&config, &out)?;
            print!("{}", summary.render());
        }
        Command::Eval {
            annotations,
            predictions,
            out,
        } => {
            let config = RunConfig::resolve(cli.config.as_deref(), &o)?;
            let report = eval::run(&config, &annotations, &predictions, out.as_deref())?;
            print!("{}", report.render());
        }
        Command::Match {
            annotations,
            predictions,
            verify,
            out,
        } => {
            let config = RunConfig::resolve(cli.config.as_deref(), &o)?;
            let report =
                matching::run(&config, &annotations, &predictions, verify, out.as_deref())?;
            print!("{}", report.render());
            if report.disagreements > 0 {
                bail!(zoo3d::Error::InvalidConfig(format!(
                    "{} scenes disagree with brute force",
                    report.disagreements
                )));
            }
        }
        Command::Decode {
            annotations,
            out,
            weights,
            slots,
            prompts,
            prompts_file,
            train_mode,
        } => {
            o.weights = weights;
            o.slots = slots;
            o.prompts = prompts;
            o.prompts_file = prompts_file;
            o.train_mode = train_mode;
            let config = RunConfig::resolve(cli.config.as_deref(), &o)?;
            let summary = decode::run(&config, &annotations, &out)?;
            print!("{}", summary.render());
        }
        Command::Selfcheck { out } => {
            let config = RunConfig::resolve(cli.config.as_deref(), &o)?;
            let report = selfcheck::run(&config);
            print!("{}", report.render());
            if let Some(out) = out {
                zoo3d_cli::corpus::write_json(&out, &report)?;
            }
            if !report.passed() {
                bail!("self-check failed");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
