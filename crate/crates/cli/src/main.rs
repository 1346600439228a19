//! `dlmc`: run the EV/PV scenario matrix on a feeder and report DLMCs.
//!
//! Exit codes: 0 every cell succeeded, 1 runtime failure, 2 some cells failed
//! (or a self-scheduling check did not pass), 3 invalid configuration or inputs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{ConfigError, ProgramRequest, Report};
use config::RunFlags;

#[derive(Parser)]
#[command(
    name = "dlmc",
    version,
    about = "Distribution locational marginal costs for EV/PV scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario grid and persist every cell.
    Run(RunArgs),
    /// Summarize a persisted result set.
    Report {
        #[command(subcommand)]
        what: ReportCommand,
    },
    /// Re-run one persisted cell from its own inputs.
    Rerun {
        /// Cell directory written by `run`.
        cell: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Self-schedule a cell's devices at posted prices and compare with the cell's dispatch.
    Selfsched {
        /// Price file (`node,hour,lambda_p,lambda_q`), e.g. a cell's prices.csv.
        #[arg(long)]
        prices: PathBuf,
        /// Cell directory providing the fleet and reference dispatch.
        #[arg(long)]
        cell: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Export model internals for inspection.
    Export {
        #[command(subcommand)]
        what: ExportCommand,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Feeder JSON; defaults to the shipped reference feeder.
    #[arg(long)]
    feeder: Option<PathBuf>,
    /// Hourly trajectories CSV; required with --feeder.
    #[arg(long)]
    trajectories: Option<PathBuf>,
    /// Per-site EV/PV template JSON; defaults to the reference template.
    #[arg(long)]
    fleet_template: Option<PathBuf>,
    /// Root reactive price as a fraction of the LMP where the file gives none.
    #[arg(long)]
    q_fraction: Option<f64>,
    /// Place every device at this node, using the first template site.
    #[arg(long)]
    node: Option<u32>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    inputs: InputArgs,
    /// TOML file; its values override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid terms, e.g. `evs=0,3,6 pv=0,30,60` (values per site).
    #[arg(long, num_args = 1..)]
    grid: Vec<String>,
    /// Scheduling options, e.g. `bau,tou,pq,full`.
    #[arg(long, value_delimiter = ',')]
    options: Vec<String>,
    /// Single-cell EV count per site.
    #[arg(long)]
    evs: Option<usize>,
    /// Single-cell PV capacity per site, kVA.
    #[arg(long)]
    pv_kva: Option<f64>,
    /// Single-cell scheduling option.
    #[arg(long)]
    option: Option<String>,
    /// Limit transformer current to twice its nominal value.
    #[arg(long)]
    protection: bool,
    /// Concurrent cells; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
    /// Transformer attribution of the DLMC breakdown: `all` or `co-located`.
    #[arg(long)]
    attribution: Option<String>,
    /// Decomposition coefficients: `model` or `reference`.
    #[arg(long)]
    coefficients: Option<String>,
    /// Skip the self-scheduling check.
    #[arg(long)]
    no_verify: bool,
    /// Skip sensitivities and DLMC unbundling.
    #[arg(long)]
    no_unbundle: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Cost differences against the base case and loss of life.
    Table {
        #[arg(long, alias = "out")]
        dir: PathBuf,
        /// CSV instead of a fixed-width table.
        #[arg(long)]
        csv: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Hourly DLMC components at a node for every cell of one option.
    Dlmc {
        #[arg(long, alias = "out")]
        dir: PathBuf,
        #[arg(long)]
        node: u32,
        #[arg(long)]
        option: String,
        /// Append the transformer decomposition columns.
        #[arg(long)]
        decompose: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Transformer component decomposition at a transformer node.
    Decompose {
        #[arg(long, alias = "out")]
        dir: PathBuf,
        #[arg(long)]
        node: u32,
        #[arg(long)]
        option: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ExportCommand {
    /// Piecewise-linear aging table.
    Pwl {
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// The conic program of one cell in Conic Benchmark Format.
    Program {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long, default_value_t = 0)]
        evs: usize,
        #[arg(long, default_value_t = 0.0)]
        pv_kva: f64,
        #[arg(long, default_value = "full")]
        option: String,
        #[arg(long)]
        protection: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// One sensitivity block of a persisted cell.
    Sensitivity {
        #[arg(long)]
        cell: PathBuf,
        /// Hour, 1-based.
        #[arg(long)]
        hour: usize,
        #[arg(long)]
        node: u32,
        /// `p` or `q`.
        #[arg(long, default_value = "p")]
        side: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run_flags(a: RunArgs) -> (RunFlags, Option<PathBuf>) {
    let flags = RunFlags {
        feeder: a.inputs.feeder,
        trajectories: a.inputs.trajectories,
        fleet_template: a.inputs.fleet_template,
        q_fraction: a.inputs.q_fraction,
        grid: a.grid,
        options: a.options,
        evs: a.evs,
        pv_kva: a.pv_kva,
        option: a.option,
        node: a.inputs.node,
        protection: a.protection,
        jobs: a.jobs,
        attribution: a.attribution,
        coefficients: a.coefficients,
        no_verify: a.no_verify,
        no_unbundle: a.no_unbundle,
        out: a.out,
    };
    (flags, a.config)
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run(args) => {
            let (flags, config) = run_flags(args);
            commands::run(flags, config)
        }
        Command::Report { what } => match what {
            ReportCommand::Table { dir, csv, output } => commands::report(&dir, Report::Table { csv }, output.as_deref()),
            ReportCommand::Dlmc {
                dir,
                node,
                option,
                decompose,
                output,
            } => commands::report(&dir, Report::Dlmc { node, option, decompose }, output.as_deref()),
            ReportCommand::Decompose {
                dir,
                node,
                option,
                output,
            } => commands::report(&dir, Report::Decompose { node, option }, output.as_deref()),
        },
        Command::Rerun { cell, out } => commands::rerun(&cell, &out),
        Command::Selfsched {
            prices,
            cell,
            tolerance,
            output,
        } => commands::selfsched(&prices, &cell, tolerance, output.as_deref()),
        Command::Export { what } => match what {
            ExportCommand::Pwl { output } => commands::export_pwl(output.as_deref()),
            ExportCommand::Program {
                inputs,
                evs,
                pv_kva,
                option,
                protection,
                output,
            } => {
                let q = inputs
                    .q_fraction
                    .unwrap_or(dlmc_core::trajectories::DEFAULT_REACTIVE_PRICE_FRACTION);
                let loaded = commands::load_inputs(
                    inputs.feeder.as_deref(),
                    inputs.trajectories.as_deref(),
                    inputs.fleet_template.as_deref(),
                    q,
                    inputs.node,
                )?;
                let req = ProgramRequest {
                    evs,
                    pv_kva,
                    option,
                    protection,
                };
                commands::export_program(loaded, req, output.as_deref())
            }
            ExportCommand::Sensitivity {
                cell,
                hour,
                node,
                side,
                output,
            } => commands::export_sensitivity(&cell, hour, node, &side, output.as_deref()),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e)
            if e.chain().any(|c| {
                c.downcast_ref::<std::io::Error>()
                    .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
            }) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
