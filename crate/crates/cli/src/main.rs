use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rydpump::protocols::RecordMode;
use rydpump_cli::commands::{cmd_mc, cmd_plot, cmd_run, cmd_solve_timing, cmd_sweep, Overrides, Written};
use rydpump_cli::plot::Panel;
use rydpump_cli::{CliError, RunConfig};

/// Pulsed dissipative preparation of entangled Rydberg-atom states.
///
/// Frequencies in configs are in MHz (or kHz) with the 2π implicit, times
/// in μs, lengths in μm, temperatures in μK.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Worker threads for sweeps and Monte Carlo (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Record {
    Segment,
    Cycle,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    record: Option<Record>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let overrides = Overrides {
            out_dir: self.out_dir.clone(),
            seed: self.seed,
            record: self.record.map(|r| match r {
                Record::Segment => RecordMode::Segment,
                Record::Cycle => RecordMode::Cycle,
            }),
        };
        Ok(overrides.apply(RunConfig::load(&self.config)?))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one protocol and write `<stem>.csv` and `<stem>.json`.
    Run(Common),
    /// Run the config once per parameter value (or per sweep-block grid point).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted config path, e.g. `protocol.u_mhz`; comma-separate to set several.
        #[arg(long)]
        param: Option<String>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
    },
    /// Thermal-motion Monte Carlo.
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trajectories: Option<usize>,
        /// Temperatures in μK.
        #[arg(long, value_delimiter = ',')]
        temperature: Option<Vec<f64>>,
    },
    /// Detuned step-C'' timing for the GHZ protocol.
    SolveTiming {
        /// Ω_a in MHz (2π implicit).
        #[arg(long)]
        omega: f64,
        #[arg(long, default_value_t = 10)]
        max_k: u32,
    },
    /// Render a result CSV as an SVG line plot.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Panel::Cycle)]
        panel: Panel,
    },
}

fn report(w: &Written) {
    for p in &w.csv {
        println!("{}", p.display());
    }
    println!("{}", w.json.display());
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Run(c) => report(&cmd_run(&c.load()?)?),
        Command::Sweep { common, param, values } => {
            report(&cmd_sweep(&common.load()?, param.as_deref(), values.as_deref())?)
        }
        Command::Mc { common, trajectories, temperature } => {
            report(&cmd_mc(&common.load()?, trajectories, temperature.as_deref())?)
        }
        Command::SolveTiming { omega, max_k } => {
            let v = cmd_solve_timing(omega, max_k)?;
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
        }
        Command::Plot { input, output, panel } => {
            cmd_plot(&input, &output, panel)?;
            println!("{}", output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
