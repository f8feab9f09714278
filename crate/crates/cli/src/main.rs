use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nof1_cli::commands::{
    cmd_experiment, cmd_generate, cmd_replay, cmd_report, ExperimentArgs, ExperimentMode,
    GenerateArgs, ReplayArgs,
};
use nof1_core::data::DataFormat;

#[derive(Parser)]
#[command(
    name = "nof1",
    version,
    about = "Progressive Bayesian confidence tiers for N-of-1 daily logs"
)]
struct Cli {
    /// Worker threads for Monte Carlo and sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

impl From<Format> for DataFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => DataFormat::Csv,
            Format::Jsonl => DataFormat::Jsonl,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Single,
    Montecarlo,
    Sweep,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its ground-truth manifest.
    Generate {
        /// Generator config JSON; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Classify every day of a dataset and write timelines and insights.
    Replay {
        /// Dataset file (.csv or .jsonl).
        data: PathBuf,
        /// Run config JSON (prior, engine, valence).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Ground-truth manifest naming the pairs; defaults to a
        /// `ground_truth.json` beside the dataset.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Explicit pairs as factor:outcome; overrides the manifest.
        #[arg(long = "pair")]
        pairs: Vec<String>,
        /// Days at which insight lists are written.
        #[arg(long, value_delimiter = ',', default_values_t = [7u32, 14, 30, 90])]
        milestones: Vec<u32>,
        #[arg(long)]
        out: PathBuf,
        /// Input format; inferred from the extension when omitted.
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Run a single-dataset evaluation, a Monte Carlo replication or a sweep.
    Experiment {
        #[arg(value_enum)]
        mode: Mode,
        /// Run config JSON; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Generator seed (single) or master seed (montecarlo, sweep).
        #[arg(long)]
        seed: Option<u64>,
        /// Number of datasets (montecarlo, sweep).
        #[arg(long = "datasets")]
        n_datasets: Option<usize>,
        /// Sweep grid entries as name=v1,v2,...; repeatable.
        #[arg(long)]
        grid: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a saved report.json or sweep.json as Markdown.
    Report {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()?;
    }
    match cli.command {
        Command::Generate {
            config,
            seed,
            out,
            format,
        } => cmd_generate(&GenerateArgs {
            config,
            seed,
            out,
            format: format.into(),
        }),
        Command::Replay {
            data,
            config,
            truth,
            pairs,
            milestones,
            out,
            format,
        } => cmd_replay(&ReplayArgs {
            data,
            format: format.map(Into::into),
            config,
            truth,
            pairs,
            milestones,
            out,
        }),
        Command::Experiment {
            mode,
            config,
            seed,
            n_datasets,
            grid,
            out,
        } => cmd_experiment(&ExperimentArgs {
            mode: match mode {
                Mode::Single => ExperimentMode::Single,
                Mode::Montecarlo => ExperimentMode::MonteCarlo,
                Mode::Sweep => ExperimentMode::Sweep,
            },
            config,
            seed,
            n_datasets,
            grid,
            out,
        }),
        Command::Report { input, out } => cmd_report(&input, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
