use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use batchloss::cli::{parse_config, run, trace, ExperimentConfig, Mode, OutputFormat};

#[derive(Parser)]
#[command(
    name = "batchloss",
    version,
    about = "Losses per busy period in batch loss queues"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Regenerative estimates for every sweep capacity.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Print the event trace of the first CYCLES cycles to stderr.
        #[arg(long, value_name = "CYCLES")]
        trace: Option<usize>,
    },
    /// Test E M_L = E X_1 under the equality hypotheses.
    VerifyTheorem(Common),
    /// One-sided test of E M_L > E X_1 for NWUE arrivals and nontrivial Y.
    VerifyLemma(Common),
    /// Exact E M_L for Poisson arrivals with lattice masses.
    Oracle(Common),
    /// Aging class and mean residual life grid of one distribution.
    ClassifyDist(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Report,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, value_name = "N")]
    cycles: Option<usize>,
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

fn load(common: &Common, mode: Mode) -> Result<ExperimentConfig, String> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| format!("{}: {e}", common.config.display()))?;
    let mut config =
        parse_config(&text).map_err(|e| format!("{}: {e}", common.config.display()))?;
    config.mode = mode;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(cycles) = common.cycles {
        config.num_cycles = cycles;
    }
    if let Some(workers) = common.workers {
        config.workers = workers;
    }
    if let Some(out) = &common.out {
        config.output.path = Some(out.clone());
    }
    if let Some(format) = common.format {
        config.output.format = match format {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Report => OutputFormat::Report,
        };
    }
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, mode, trace_cycles) = match &cli.command {
        Command::Simulate { common, trace } => (common, Mode::Simulate, *trace),
        Command::VerifyTheorem(c) => (c, Mode::VerifyTheorem, None),
        Command::VerifyLemma(c) => (c, Mode::VerifyLemma, None),
        Command::Oracle(c) => (c, Mode::Oracle, None),
        Command::ClassifyDist(c) => (c, Mode::ClassifyDist, None),
    };
    let config = match load(common, mode) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(cycles) = trace_cycles {
        match trace(&config, cycles) {
            Ok(t) => eprint!("{t}"),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
    }
    match run(&config) {
        Ok(outcome) => {
            if !outcome.written {
                print!("{}", outcome.output);
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
