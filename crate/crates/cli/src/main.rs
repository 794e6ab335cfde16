mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "hvaclab", version, about = "Seven-zone fan-coil plant simulator with masked DQN control")]
pub struct Cli {
    /// TOML config; built-in defaults fill every missing key.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory. Defaults to <$HVAC_LAB_OUT or ./runs>/<command>-<timestamp>.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Suppress progress and tables on stdout/stderr (errors still print).
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    #[value(name = "rule_based")]
    RuleBased,
    #[value(name = "full_random")]
    FullRandom,
    #[value(name = "masked_random")]
    MaskedRandom,
    /// Greedy policy of a trained checkpoint.
    #[value(name = "dqn")]
    Dqn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskArg {
    None,
    Knn,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Masked,
    Vanilla,
}

#[derive(Debug, Clone, Args)]
pub struct MaskOpts {
    /// Feasible-set source; masked_random defaults to knn.
    #[arg(long, value_enum)]
    pub mask: Option<MaskArg>,
    /// Wrap the mask source in the discretised-state cache.
    #[arg(long)]
    pub cache: bool,
    /// Demonstration CSV for the kNN oracle (overrides demos.path).
    #[arg(long)]
    pub demos: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roll out one day and write the per-step trajectory.
    Simulate {
        #[arg(long, value_enum, default_value = "rule_based")]
        policy: PolicyArg,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        mask: MaskOpts,
    },
    /// Generate a demonstration log with the noisy rule policy.
    Demos {
        #[arg(long)]
        days: Option<usize>,
    },
    /// Export prompt/recommendation pairs labelled by the kNN oracle.
    ExportSft {
        #[arg(long)]
        demos: Option<PathBuf>,
        #[arg(long)]
        max_records: Option<usize>,
    },
    /// Train masked or vanilla DQN agents, one per seed.
    Train {
        #[arg(long, value_enum, default_value = "masked")]
        variant: Variant,
        /// Comma-separated seeds (overrides train.seeds).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Comma-separated hidden widths (overrides train.hidden_layers).
        #[arg(long, value_delimiter = ',')]
        hidden: Option<Vec<usize>>,
        #[arg(long)]
        cache: bool,
        #[arg(long)]
        demos: Option<PathBuf>,
    },
    /// Evaluate a baseline or a trained checkpoint over held-out days.
    Evaluate {
        #[arg(long, value_enum, default_value = "rule_based")]
        policy: PolicyArg,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[command(flatten)]
        mask: MaskOpts,
    },
    /// Tabulate evaluation runs against the first one.
    Compare {
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
    },
    /// Time mask queries with and without the cache over one day.
    CacheBench {
        /// Skip the warm-up pass.
        #[arg(long)]
        cold: bool,
        #[arg(long)]
        demos: Option<PathBuf>,
    },
    /// Print the resolved configuration as TOML.
    PrintConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
