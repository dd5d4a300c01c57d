use std::path::PathBuf;
use std::process::ExitCode;

use cfmmwd::mev::SearchMode;
use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Exit status 2.
    #[error("config error: {0}")]
    Config(String),
    /// Exit status 1.
    #[error("solver failure: {0}")]
    Solver(#[from] cfmmwd::Error),
    #[error("writing {path}: {msg}")]
    Output { path: PathBuf, msg: String },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "cfmmwd",
    version,
    about = "CFMMs traded against by Walrasian-demand agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `run.steps`.
    #[arg(long, global = true)]
    steps: Option<u64>,
    /// Overrides `run.out_dir` (default `out`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for replicas and sample averages.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the pool against a stream of agents; writes trajectory.csv,
    /// heatmap.csv and run.json.
    Simulate,
    /// Walrasian equilibrium of the endowment distribution.
    Equilibrium,
    /// Block builder's Walrasian MEV over a transaction file.
    Mev {
        #[arg(long, value_parser = parse_search)]
        search: Option<SearchMode>,
    },
    /// LP utility from rebalancing versus from the pool's arbitrage point.
    LpLoss,
    /// Stationary law and welfare of a finite reserve chain.
    Stationary,
}

fn parse_search(s: &str) -> Result<SearchMode, String> {
    match s {
        "exact" => Ok(SearchMode::Exact),
        "heuristic" => Ok(SearchMode::Heuristic),
        "auto" => Ok(SearchMode::Auto),
        _ => Err(format!("expected exact, heuristic or auto, got {s}")),
    }
}

pub struct Overrides {
    pub seed: Option<u64>,
    pub steps: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--workers: {e}")))?;
    }
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let cfg = ExperimentConfig::load(&path)?;
    let ov = Overrides {
        seed: cli.seed,
        steps: cli.steps,
        out_dir: cli.out_dir,
    };
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, &ov),
        Command::Equilibrium => commands::equilibrium(&cfg, &ov),
        Command::Mev { search } => commands::mev(&cfg, &ov, search),
        Command::LpLoss => commands::lp_loss(&cfg, &ov),
        Command::Stationary => commands::stationary(&cfg, &ov),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Solver(cfmmwd::Error::EnumerationCap { .. }) = e {
                eprintln!("hint: pass --search heuristic");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
