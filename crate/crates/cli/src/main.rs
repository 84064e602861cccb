use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use log::info;

use vlasov_carleman_cli::config::{Mode, Overrides, OUT_DIR_ENV};
use vlasov_carleman_cli::{emit, exit_code, parse_config, run};

/// Carleman-linearized Vlasov-Krook pipeline, emulated classically.
///
/// Exit status: 0 on success, 2 when the convergence verdict is negative,
/// 1 on any error.
#[derive(Parser, Debug)]
#[command(name = "vlasov-carleman", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Norms, convergence parameter, truncation plan and complexity.
    Analyze(Common),
    /// Plasma feasibility bound on N_v.
    Feasibility(Common),
    /// Evolve the truncated Carleman system and extract f(T).
    RunCarleman(Common),
    /// Explicit nonlinear reference solution.
    RunReference(Common),
    /// Carleman and reference paths with an error report.
    Compare(Common),
    /// Vary N_C or the grid and tabulate the results.
    Sweep(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory (overrides the config and the environment).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for eigensolver start vectors and initial perturbations.
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Use normalized units (all physical constants equal to one).
    #[arg(long)]
    normalized: bool,
    /// Leave wall-clock timings out so reports are byte-reproducible.
    #[arg(long)]
    canonical: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl Command {
    fn split(self) -> (Mode, Common) {
        match self {
            Command::Analyze(c) => (Mode::Analyze, c),
            Command::Feasibility(c) => (Mode::Feasibility, c),
            Command::RunCarleman(c) => (Mode::RunCarleman, c),
            Command::RunReference(c) => (Mode::RunReference, c),
            Command::Compare(c) => (Mode::Compare, c),
            Command::Sweep(c) => (Mode::Sweep, c),
        }
    }
}

fn execute(mode: Mode, common: Common) -> Result<u8> {
    let ov = Overrides {
        mode: Some(mode),
        seed: common.seed,
        normalized: common.normalized,
        out: common.out,
        env_out: std::env::var_os(OUT_DIR_ENV).map(PathBuf::from),
    };
    let cfg = parse_config(&common.config, &ov)?;
    let outcome = run(&cfg)?;
    let files = emit::emit(&outcome, &cfg.output, common.canonical)?;
    for f in &files {
        info!("wrote {}", f.display());
    }
    println!("{}: {}", cfg.mode.name(), outcome.verdict);
    Ok(exit_code(&outcome))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, common) = cli.command.split();
    let level = match common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(mode, common) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
