use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use mlhc_cbm::config::RunConfig;
use mlhc_cbm::pipeline::{self, Command};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Synth,
    Derive,
    Preprocess,
    Train,
    Eval,
    Diagnose,
    Retro,
    /// Every stage from synth to retro.
    All,
}

/// Concept-bottleneck forecaster for mixed layer heat content.
#[derive(Debug, Parser)]
#[command(name = "mlhc-cbm", version)]
struct Cli {
    command: Cmd,
    /// Run configuration (`section.key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `paths.out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed of the synthetic world; overrides `synth.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::new().filter_level(log::LevelFilter::Info).parse_default_env().init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> mlhc_cbm::Result<()> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.synth.master_seed = seed;
    }
    let cmd = match cli.command {
        Cmd::Synth => Command::Synth,
        Cmd::Derive => Command::Derive,
        Cmd::Preprocess => Command::Preprocess,
        Cmd::Train => Command::Train,
        Cmd::Eval => Command::Eval,
        Cmd::Diagnose => Command::Diagnose,
        Cmd::Retro => Command::Retro,
        Cmd::All => return pipeline::run_all(&cfg),
    };
    pipeline::run(cmd, &cfg)
}
