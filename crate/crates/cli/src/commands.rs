use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use log::info;

use dlmc_core::der::{bau_schedule, tou_schedule, DerSchedule};
use dlmc_core::dlmc::PriceSignals;
use dlmc_core::feeder::load_feeder;
use dlmc_core::opf::{build_fixed_schedule, build_full_opt, build_pq_opt, OpfOptions};
use dlmc_core::runner::{
    emit_cost_lol_table, emit_decomposition_series, emit_dlmc_series, format_cost_table, load_cell, load_result_set, rerun_cell,
    write_cost_table, write_result_set, CellResult,
};
use dlmc_core::selfsched::verify_against;
use dlmc_core::sensitivity::{assemble_system, OperatingPoint};
use dlmc_core::trajectories::load_trajectories;
use dlmc_core::{
    reference, run_matrix, AgingPwl, ExogenousTrajectories, Feeder, FleetTemplate, NodeId, ScenarioCase, SchedulingOption, Side,
};

use crate::config::{parse_options, resolve, FileConfig, RunFlags, RunSettings};

/// Exit code when at least one cell failed.
pub const CELLS_FAILED: u8 = 2;

/// Marks errors caused by invalid configuration or inputs; these exit with code 3.
#[derive(Debug)]
pub struct ConfigError(pub anyhow::Error);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(e: impl Into<anyhow::Error>) -> anyhow::Error {
    anyhow::Error::new(ConfigError(e.into()))
}

/// Feeder, trajectories and fleet template of a run; the shipped reference data fills any gap.
pub struct Inputs {
    pub feeder: Arc<Feeder>,
    pub trajectories: Arc<ExogenousTrajectories>,
    pub template: FleetTemplate,
}

pub fn load_inputs(
    feeder: Option<&Path>,
    trajectories: Option<&Path>,
    template: Option<&Path>,
    q_fraction: f64,
    node: Option<u32>,
) -> Result<Inputs> {
    let (feeder, trajectories) = match (feeder, trajectories) {
        (None, None) => {
            let f = reference::feeder();
            let t = reference::trajectories(&f).with_reactive_fraction(q_fraction);
            (f, t)
        }
        (Some(_), None) => return Err(config_err(anyhow::anyhow!("--trajectories is required with --feeder"))),
        (f, Some(t)) => {
            let f = match f {
                Some(path) => load_feeder(path).map_err(config_err)?,
                None => reference::feeder(),
            };
            let t = load_trajectories(t, &f, q_fraction).map_err(config_err)?;
            (f, t)
        }
    };
    let mut template = match template {
        Some(path) => FleetTemplate::load(path).map_err(config_err)?,
        None => reference::fleet_template(),
    };
    if let Some(id) = node {
        let Some(first) = template.sites.first().cloned() else {
            return Err(config_err(anyhow::anyhow!("fleet template has no sites")));
        };
        let mut site = first;
        site.ev.node = NodeId(id);
        template.sites = vec![site];
    }
    template
        .instantiate(1, 1.0)
        .validate(&feeder, trajectories.horizon)
        .map_err(config_err)?;
    Ok(Inputs {
        feeder: Arc::new(feeder),
        trajectories: Arc::new(trajectories),
        template,
    })
}

pub fn run(flags: RunFlags, config: Option<PathBuf>) -> Result<ExitCode> {
    let file = match &config {
        Some(path) => FileConfig::load(path).map_err(config_err)?,
        None => FileConfig::default(),
    };
    let settings: RunSettings = resolve(flags, file).map_err(config_err)?;
    let inputs = load_inputs(
        settings.feeder.as_deref(),
        settings.trajectories.as_deref(),
        settings.fleet_template.as_deref(),
        settings.q_fraction,
        settings.node,
    )?;
    let m = &settings.matrix;
    info!(
        "running {} EV x {} PV x {} option cells on {} nodes",
        m.evs.len(),
        m.pv_kva.len(),
        m.options.len(),
        inputs.feeder.node_count()
    );
    let results = run_matrix(inputs.feeder.clone(), inputs.trajectories.clone(), &inputs.template, m).map_err(config_err)?;
    write_result_set(&settings.out, &inputs.feeder, &inputs.trajectories, m, &results)
        .with_context(|| format!("cannot write results to {}", settings.out.display()))?;
    if let Ok(rows) = emit_cost_lol_table(&results) {
        print!("{}", format_cost_table(&rows));
    }
    let failed: Vec<&CellResult> = std::iter::once(&results.base)
        .filter(|b| !b.is_ok())
        .chain(results.cells.iter().filter(|c| !c.is_ok()))
        .collect();
    for c in &failed {
        eprintln!("cell {} failed: {}", c.key, c.error_messages().join("; "));
    }
    eprintln!(
        "{} cells, {} failed; results in {}",
        results.cells.len(),
        failed.len(),
        settings.out.display()
    );
    Ok(if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(CELLS_FAILED)
    })
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn parse_option(s: &str) -> Result<SchedulingOption> {
    let mut list = parse_options(&[s.to_string()]).map_err(config_err)?;
    match (list.pop(), list.is_empty()) {
        (Some(o), true) => Ok(o),
        _ => Err(config_err(anyhow::anyhow!("expected exactly one option, got {s:?}"))),
    }
}

pub enum Report {
    Table { csv: bool },
    Dlmc { node: u32, option: String, decompose: bool },
    Decompose { node: u32, option: String },
}

pub fn report(dir: &Path, what: Report, out: Option<&Path>) -> Result<ExitCode> {
    let (feeder, results) = load_result_set(dir).map_err(config_err)?;
    let mut w = output(out)?;
    match what {
        Report::Table { csv } => {
            let rows = emit_cost_lol_table(&results).map_err(config_err)?;
            if csv {
                write_cost_table(&rows, &mut w)?;
            } else {
                w.write_all(format_cost_table(&rows).as_bytes())?;
            }
        }
        Report::Dlmc { node, option, decompose } => {
            emit_dlmc_series(&results, &feeder, NodeId(node), parse_option(&option)?, decompose, &mut w).map_err(config_err)?;
        }
        Report::Decompose { node, option } => {
            emit_decomposition_series(&results, &feeder, NodeId(node), parse_option(&option)?, &mut w).map_err(config_err)?;
        }
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

pub fn rerun(dir: &Path, out: &Path) -> Result<ExitCode> {
    if !dir.join("cell.json").is_file() {
        return Err(config_err(anyhow::anyhow!("{} is not a cell directory", dir.display())));
    }
    let cell = rerun_cell(dir, out)?;
    if cell.is_ok() {
        eprintln!("cell {} reproduced in {}", cell.key, out.display());
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("cell {} failed: {}", cell.key, cell.error_messages().join("; "));
        Ok(ExitCode::from(CELLS_FAILED))
    }
}

fn read_cell(dir: &Path) -> Result<(Feeder, ExogenousTrajectories, CellResult)> {
    load_cell(dir).map_err(config_err)
}

pub fn selfsched(prices: &Path, dir: &Path, tolerance: f64, out: Option<&Path>) -> Result<ExitCode> {
    let file = fs::File::open(prices)
        .with_context(|| format!("cannot read {}", prices.display()))
        .map_err(config_err)?;
    let prices = PriceSignals::read_csv(file).map_err(config_err)?;
    let (feeder, traj, cell) = read_cell(dir)?;
    let Some(output_cell) = cell.output() else {
        return Err(config_err(anyhow::anyhow!(
            "cell {} has no solution to compare with",
            cell.key
        )));
    };
    if prices.horizon != traj.horizon {
        return Err(config_err(anyhow::anyhow!(
            "price file covers {} hours, cell {}",
            prices.horizon,
            traj.horizon
        )));
    }
    let scenario = ScenarioCase::new(Arc::new(feeder), Arc::new(traj), output_cell.fleet.clone(), cell.key.option)?;
    let report = verify_against(
        &scenario,
        &prices,
        &output_cell.solution.schedule,
        &Default::default(),
        tolerance,
    )?;
    let mut w = output(out)?;
    write!(w, "{report}")?;
    w.flush()?;
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(CELLS_FAILED)
    })
}

pub fn export_pwl(out: Option<&Path>) -> Result<ExitCode> {
    let mut w = output(out)?;
    AgingPwl::calibrated().write_csv(&mut w)?;
    Ok(ExitCode::SUCCESS)
}

pub struct ProgramRequest {
    pub evs: usize,
    pub pv_kva: f64,
    pub option: String,
    pub protection: bool,
}

pub fn export_program(inputs: Inputs, req: ProgramRequest, out: Option<&Path>) -> Result<ExitCode> {
    let option = parse_option(&req.option)?;
    let fleet = inputs.template.instantiate(req.evs, req.pv_kva);
    let opts = if req.protection {
        OpfOptions::protection()
    } else {
        OpfOptions::default()
    };
    let t = &inputs.trajectories;
    let case = ScenarioCase::new(inputs.feeder.clone(), t.clone(), fleet, option).map_err(config_err)?;
    let model = if case.fleet.is_empty() {
        build_fixed_schedule(&case, &DerSchedule::zeros(&case.fleet, t.horizon), &opts)?
    } else {
        match option {
            SchedulingOption::Bau => build_fixed_schedule(&case, &bau_schedule(&case.fleet, &t.pv_factor)?, &opts)?,
            SchedulingOption::Tou => build_fixed_schedule(&case, &tou_schedule(&case.fleet, &t.lmp, &t.pv_factor)?, &opts)?,
            SchedulingOption::PqOpt => build_pq_opt(&case, &opts)?,
            SchedulingOption::FullOpt => build_full_opt(&case, &opts)?,
        }
    };
    let mut w = output(out)?;
    model.program.write_cbf(&mut w)?;
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

pub fn export_sensitivity(dir: &Path, hour: usize, node: u32, side: &str, out: Option<&Path>) -> Result<ExitCode> {
    let side = match side.to_ascii_lowercase().as_str() {
        "p" => Side::P,
        "q" => Side::Q,
        other => return Err(config_err(anyhow::anyhow!("side must be p or q, got {other:?}"))),
    };
    let (feeder, _, cell) = read_cell(dir)?;
    let Some(output_cell) = cell.output() else {
        bail!("cell {} has no solution", cell.key);
    };
    let sol = &output_cell.solution;
    if !(1..=sol.horizon).contains(&hour) {
        return Err(config_err(anyhow::anyhow!("hour must lie in 1..={}", sol.horizon)));
    }
    let j = feeder.index_of(NodeId(node)).map_err(config_err)?;
    if j == 0 {
        return Err(config_err(anyhow::anyhow!("the root has no sensitivity block")));
    }
    let sys = assemble_system(&feeder, &OperatingPoint::from_solution(sol, hour - 1), f64::INFINITY)?;
    let block = sys.solve_block(j, side.perturbation())?;
    let mut w = output(out)?;
    block.write_csv(&feeder, &mut w)?;
    Ok(ExitCode::SUCCESS)
}
