use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod rundir;

#[derive(Parser)]
#[command(name = "wdn-pse", version, about = "Probabilistic state estimation for water networks")]
struct Cli {
    /// Worker threads for sampling and covariance solves.
    #[arg(long, global = true, env = "WDN_PSE_THREADS")]
    threads: Option<usize>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct OutArgs {
    /// Run directory for outputs and the run manifest.
    #[arg(long, default_value = "wdn-pse-out")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum CouplingArg {
    MeasuredEveryStep,
    AnchoredAtFirstStep,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Protocol,
    Isolated,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DensityKind {
    Pipe,
    Pump,
}

#[derive(Subcommand)]
pub enum Command {
    /// Parse a network, check topology and the rank of its sufficient system.
    Validate {
        inp: PathBuf,
    },
    /// Deterministic operating point at one step.
    Solve {
        inp: PathBuf,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        step: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Extended-period simulation with tank chaining.
    Eps {
        inp: PathBuf,
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Valve schedule JSON (list of step/valve_id/status/setting entries).
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Number of steps; the network duration when omitted.
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Covariance of every head and flow under the scenario's uncertainty.
    Pse {
        inp: PathBuf,
        scenario: PathBuf,
        #[arg(long)]
        horizon: Option<usize>,
        /// Also solve the horizon system with tank rows.
        #[arg(long)]
        coupled: bool,
        #[arg(long, value_enum, default_value = "measured-every-step")]
        tank_coupling: CouplingArg,
        /// Row weights JSON replacing the scenario's weights.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Write the full covariance of every step as triplets.
        #[arg(long)]
        dump_cov: bool,
        /// Emit an SVG band chart for these node or link ids.
        #[arg(long, value_delimiter = ',')]
        svg: Vec<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Monte-Carlo simulation of the nonlinear model.
    Mcs {
        inp: PathBuf,
        scenario: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 2019)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        step: usize,
        /// A variance.csv from `pse` to compare against.
        #[arg(long)]
        compare: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Per-state sigma while each source's margin of error varies.
    Sweep {
        inp: PathBuf,
        scenario: PathBuf,
        /// Grid JSON with demand/roughness/noise margins in percent.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        step: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Empirical and analytic density of a link's head change under normal flow.
    Density {
        inp: PathBuf,
        link: String,
        #[arg(long, value_enum)]
        kind: DensityKind,
        /// Flow mean in GPM; the nominal operating point when omitted.
        #[arg(long)]
        mean: Option<f64>,
        #[arg(long)]
        sd: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 2019)]
        seed: u64,
        #[arg(long, default_value_t = 60)]
        bins: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Write a synthetic grid network as INP.
    Generate {
        #[arg(long, default_value_t = 13)]
        rows: usize,
        #[arg(long, default_value_t = 14)]
        cols: usize,
        #[arg(long, default_value_t = 2019)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<wdn_pse::Error>() {
            return match e.category() {
                wdn_pse::ErrorCategory::Input => 2,
                wdn_pse::ErrorCategory::Model => 3,
                wdn_pse::ErrorCategory::Numeric => 4,
            };
        }
        if let Some(e) = cause.downcast_ref::<commands::Failure>() {
            return e.code;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        wdn_pse::lab::configure_threads(n);
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
