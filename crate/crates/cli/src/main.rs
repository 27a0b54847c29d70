//! `graspsynth` — functional grasp synthesis from object geometry and
//! contact maps.
//!
//! Subcommands: `contactmap` (build a labelled surface map), `synthesize`
//! (full pipeline to a ranked grasp set), `eval` (scenario-suite ranking
//! evaluation), `export` (bake a saved grasp to an OBJ scene).
//!
//! Exit codes: 0 success, 2 input error, 3 synthesis error, 4 evaluation
//! error.

mod cache;
mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::Overrides;

/// A command failure carrying its exit-code class.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Synthesis(String),
    Eval(String),
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure::Input(message.into())
    }

    pub fn synthesis(message: impl Into<String>) -> Self {
        Failure::Synthesis(message.into())
    }

    pub fn eval(message: impl Into<String>) -> Self {
        Failure::Eval(message.into())
    }

    pub fn code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Synthesis(_) => 3,
            Failure::Eval(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Synthesis(m) | Failure::Eval(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "graspsynth",
    version,
    about = "Synthesize and rank functional grasps from object geometry plus attractive/repulsive contact maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ContactmapArgs {
    /// Run configuration TOML (flags override its fields)
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SynthesizeArgs {
    /// Run configuration TOML (flags override its fields)
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct EvalArgs {
    /// Scenario manifest TOML
    #[arg(long)]
    manifest: PathBuf,
    /// Run configuration TOML (flags override its fields)
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct ExportArgs {
    /// Ranked grasp set JSON written by `synthesize`
    #[arg(long)]
    grasps: PathBuf,
    /// Rank of the entry to bake (1-based)
    #[arg(long, default_value_t = 1)]
    rank: usize,
    /// Run configuration TOML (flags override its fields)
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Build a contact map from a scalar-field PLY or a painted-regions file
    Contactmap(ContactmapArgs),
    /// Sample, refine, and rank grasps; write the ranked set and provenance
    Synthesize(SynthesizeArgs),
    /// Score residual vs contact-energy ranking on a scenario manifest
    Eval(EvalArgs),
    /// Bake one grasp of a saved ranked set into an OBJ scene
    Export(ExportArgs),
}

/// Caps the global worker pool. A failure here means a pool already exists
/// (only possible in-process, never across CLI runs), so it is ignored.
fn init_threads(threads: usize) {
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Contactmap(args) => {
            let cfg = config::resolve(args.config.as_deref(), &args.overrides)?;
            init_threads(cfg.threads);
            commands::cmd_contactmap(&cfg)
        }
        Command::Synthesize(args) => {
            let cfg = config::resolve(args.config.as_deref(), &args.overrides)?;
            init_threads(cfg.threads);
            commands::cmd_synthesize(&cfg)
        }
        Command::Eval(args) => {
            let cfg = config::resolve(args.config.as_deref(), &args.overrides)?;
            init_threads(cfg.threads);
            commands::cmd_eval(&cfg, &args.manifest)
        }
        Command::Export(args) => {
            let cfg = config::resolve(args.config.as_deref(), &args.overrides)?;
            commands::cmd_export(&cfg, &args.grasps, args.rank)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(failure) = run(cli) {
        eprintln!("error: {}", failure.message());
        std::process::exit(failure.code());
    }
}
