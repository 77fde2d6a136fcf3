use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use magnus_bench::run::{execute, Stage};
use magnus_bench::{BenchConfig, BenchError};

#[derive(Parser)]
#[command(name = "magnus-bench", version, about = "Magnus scheme benchmarks on the spin-chain transfer problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize random seeds and archive them with their true infidelities.
    SeedStage(Common),
    /// Scan the simulation error against the step size.
    DtScan(Common),
    /// Re-optimize the archive under every scheme at its equal-accuracy step.
    Race(Common),
    /// Time kernel, commutator and cache initialization.
    InitReport(Common),
    /// Compare analytic gradients against finite differences.
    Gradcheck(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root; results go to `<out>/<config hash>/`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    rng_seed: Option<u64>,
    /// Count kernel initialization in the optimizer wall times.
    #[arg(long)]
    include_init: bool,
}

impl Common {
    fn config(&self) -> Result<BenchConfig, BenchError> {
        let mut cfg = match &self.config {
            Some(path) => BenchConfig::load(path)?,
            None => BenchConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = self.rng_seed {
            cfg.seeds.rng_seed = seed;
        }
        if self.include_init {
            cfg.include_initialization = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let (stage, common) = match &cli.command {
        Command::SeedStage(c) => (Stage::SeedStage, c),
        Command::DtScan(c) => (Stage::DtScan, c),
        Command::Race(c) => (Stage::Race, c),
        Command::InitReport(c) => (Stage::InitReport, c),
        Command::Gradcheck(c) => (Stage::Gradcheck, c),
    };
    match common.config().and_then(|cfg| execute(stage, &cfg)) {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
