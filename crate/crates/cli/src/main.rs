//! `lsde`: fit, compare, smooth and simulate layered trait-evolution models.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use layered_sde::run::{run, Command, RunConfig};
use layered_sde::Error;

#[derive(Parser)]
#[command(name = "lsde", version, about = "Layered linear SDE models for trait time series")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Maximum likelihood fits
    Fit(Opts),
    /// Posterior sampling and model likelihood estimates
    Sample(Opts),
    /// Fit a set of models and weigh their properties
    Compare(Opts),
    /// Smoothed latent states as plot data
    Smooth(Opts),
    /// Simulate a dataset from a generator
    Simulate(Opts),
    /// Model-selection study on simulated replicates
    Study(Opts),
    /// Run whatever command the config names
    Run(Opts),
}

#[derive(Args)]
struct Opts {
    /// TOML run configuration; relative paths inside it resolve against its directory
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    forcing: Option<PathBuf>,
    /// Model name, repeatable
    #[arg(short, long = "model")]
    models: Vec<String>,
    #[arg(long)]
    prior_file: Option<PathBuf>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn build(command: Option<Command>, o: Opts) -> Result<RunConfig, Error> {
    let cwd = std::env::current_dir()?;
    let mut cfg = match &o.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::from_toml("", &cwd)?,
    };
    if let Some(c) = command {
        cfg.command = c;
    }
    // command-line paths are relative to the working directory
    let abs = |p: PathBuf| if p.is_absolute() { p } else { cwd.join(p) };
    if let Some(p) = o.data {
        cfg.data = Some(abs(p));
    }
    if let Some(p) = o.forcing {
        cfg.forcing = Some(abs(p));
    }
    if let Some(p) = o.prior_file {
        cfg.prior = None;
        cfg.prior_file = Some(abs(p));
    }
    if let Some(p) = o.output_dir {
        cfg.output_dir = abs(p);
    }
    if !o.models.is_empty() {
        cfg.model = None;
        cfg.frame = None;
        cfg.models = o.models;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if o.threads.is_some() {
        cfg.threads = o.threads;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (command, opts) = match cli.command {
        Cmd::Fit(o) => (Some(Command::Fit), o),
        Cmd::Sample(o) => (Some(Command::Sample), o),
        Cmd::Compare(o) => (Some(Command::Compare), o),
        Cmd::Smooth(o) => (Some(Command::Smooth), o),
        Cmd::Simulate(o) => (Some(Command::Simulate), o),
        Cmd::Study(o) => (Some(Command::Study), o),
        Cmd::Run(o) => (None, o),
    };
    let outcome = build(command, opts).and_then(|cfg| run(&cfg));
    match outcome {
        Ok(out) => {
            for f in &out.files {
                println!("{}", f.display());
            }
            if out.all_failed() {
                log::error!("every model failed");
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(2)
        }
    }
}
