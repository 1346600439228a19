//! Scenario-matrix runner: schedules, solves or prices, unbundles and verifies
//! every (EV count, PV capacity, option) cell, and persists each cell to its
//! own directory.
//!
//! Grid values are per site of the fleet template. The device-free base case
//! is solved once and shared by every option.

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::der::{bau_schedule, tou_schedule, DerFleet, DerSchedule, FleetTemplate};
use crate::dlmc::{
    decompose_transformer_component, decomposition_record, dlmc_record, export_price_signals, unbundle, DlmcOptions, DlmcReport,
    Side, TransformerComponentDecomposition, DECOMPOSITION_HEADER,
};
use crate::error::{Error, Result};
use crate::feeder::{Feeder, NodeId};
use crate::opf::{price_fixed_schedule, solve_full_opt, solve_pq_opt, OpfOptions, OpfSolution};
use crate::scenario::{Penetration, ScenarioCase, SchedulingOption};
use crate::selfsched::{verify_fixed_point, VerificationReport};
use crate::sensitivity::all_sensitivities;
use crate::trajectories::ExogenousTrajectories;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixConfig {
    /// EVs per site.
    pub evs: Vec<usize>,
    /// PV capacity per site, kVA.
    pub pv_kva: Vec<f64>,
    pub options: Vec<SchedulingOption>,
    pub opf: OpfOptions,
    pub dlmc: DlmcOptions,
    /// Concurrent cells; 0 uses every core.
    pub jobs: usize,
    /// Compute sensitivities, DLMC components and transformer decompositions.
    pub unbundle: bool,
    /// Run the self-scheduling check on co-optimized cells.
    pub verify: bool,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            evs: vec![0, 3, 6],
            pv_kva: vec![0.0, 30.0, 60.0],
            options: SchedulingOption::ALL.to_vec(),
            opf: OpfOptions::default(),
            dlmc: DlmcOptions::default(),
            jobs: 0,
            unbundle: true,
            verify: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub evs: usize,
    pub pv_kva: f64,
    pub option: SchedulingOption,
}

impl CellKey {
    pub fn is_base(&self) -> bool {
        self.evs == 0 && self.pv_kva == 0.0
    }

    /// Directory name, e.g. `ev6_pv30_full`.
    pub fn slug(&self) -> String {
        format!("ev{}_pv{}_{}", self.evs, self.pv_kva, self.option.slug())
    }

    fn order(&self, other: &Self) -> Ordering {
        self.evs
            .cmp(&other.evs)
            .then(self.pv_kva.total_cmp(&other.pv_kva))
            .then(self.option.cmp(&other.option))
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EV{}/PV{}/{}", self.evs, self.pv_kva, self.option)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellOutput {
    pub key: CellKey,
    pub fleet: DerFleet,
    pub solution: OpfSolution,
    pub dlmc: Option<DlmcReport>,
    /// Co-located transformer decompositions at every transformer node, both sides.
    pub decomposition: Vec<TransformerComponentDecomposition>,
    pub verification: Option<VerificationReport>,
    /// Failures of stages after the solve.
    pub errors: Vec<String>,
}

impl CellOutput {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub key: CellKey,
    pub outcome: std::result::Result<CellOutput, String>,
}

impl CellResult {
    pub fn is_ok(&self) -> bool {
        matches!(&self.outcome, Ok(c) if c.is_ok())
    }

    pub fn output(&self) -> Option<&CellOutput> {
        self.outcome.as_ref().ok()
    }

    pub fn error_messages(&self) -> Vec<String> {
        match &self.outcome {
            Ok(c) => c.errors.clone(),
            Err(e) => vec![e.clone()],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultSet {
    pub base: CellResult,
    pub cells: Vec<CellResult>,
}

impl ResultSet {
    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| !c.is_ok()).count()
    }

    pub fn get(&self, evs: usize, pv_kva: f64, option: SchedulingOption) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.key.evs == evs && c.key.pv_kva == pv_kva && c.key.option == option)
    }
}

fn schedule_for(scenario: &ScenarioCase, option: SchedulingOption, options: &OpfOptions) -> Result<OpfSolution> {
    let t = &scenario.trajectories;
    if scenario.fleet.is_empty() {
        return price_fixed_schedule(scenario, &DerSchedule::zeros(&scenario.fleet, t.horizon), options);
    }
    match option {
        SchedulingOption::Bau => price_fixed_schedule(scenario, &bau_schedule(&scenario.fleet, &t.pv_factor)?, options),
        SchedulingOption::Tou => price_fixed_schedule(scenario, &tou_schedule(&scenario.fleet, &t.lmp, &t.pv_factor)?, options),
        // the PQ-opt dispatch is priced with the degradation cost in place
        SchedulingOption::PqOpt => price_fixed_schedule(scenario, &solve_pq_opt(scenario, options)?.schedule, options),
        SchedulingOption::FullOpt => solve_full_opt(scenario, options),
    }
}

/// Runs one cell through schedule, solve or price, unbundling and verification.
pub fn run_cell(
    feeder: &Arc<Feeder>,
    trajectories: &Arc<ExogenousTrajectories>,
    template: &FleetTemplate,
    key: CellKey,
    config: &MatrixConfig,
) -> Result<CellOutput> {
    run_cell_with_fleet(feeder, trajectories, template.instantiate(key.evs, key.pv_kva), key, config)
}

/// Runs one cell for an explicit fleet; `key` supplies the option and the reported penetration.
pub fn run_cell_with_fleet(
    feeder: &Arc<Feeder>,
    trajectories: &Arc<ExogenousTrajectories>,
    fleet: DerFleet,
    key: CellKey,
    config: &MatrixConfig,
) -> Result<CellOutput> {
    let scenario =
        ScenarioCase::new(feeder.clone(), trajectories.clone(), fleet.clone(), key.option)?.with_penetration(Penetration {
            evs: key.evs,
            pv_kva: key.pv_kva,
        });
    let solution = schedule_for(&scenario, key.option, &config.opf)?;
    let mut out = CellOutput {
        key,
        fleet,
        solution,
        dlmc: None,
        decomposition: Vec::new(),
        verification: None,
        errors: Vec::new(),
    };
    if config.unbundle {
        match all_sensitivities(feeder, &out.solution, config.dlmc.exactness_tolerance) {
            Ok(sens) => {
                match unbundle(feeder, &out.solution, &sens, &config.dlmc) {
                    Ok(r) => out.dlmc = Some(r),
                    Err(e) => out.errors.push(e.to_string()),
                }
                for (y, tf) in feeder.transformers().iter().enumerate() {
                    for hs in &sens {
                        for side in [Side::P, Side::Q] {
                            out.decomposition.push(decompose_transformer_component(
                                feeder,
                                &out.solution,
                                &config.opf.aging,
                                hs.block(tf.node, side.perturbation()),
                                y,
                                config.dlmc.coefficients,
                            ));
                        }
                    }
                }
            }
            Err(e) => out.errors.push(e.to_string()),
        }
    }
    if config.verify && key.option == SchedulingOption::FullOpt && !scenario.fleet.is_empty() {
        match verify_fixed_point(&out.solution, &scenario, &config.opf.solver) {
            Ok(r) => {
                if !r.passed() {
                    out.errors.push(format!(
                        "self-scheduling mismatch (worst relative error {:.3e})",
                        r.worst_error()
                    ));
                }
                out.verification = Some(r);
            }
            Err(e) => out.errors.push(e.to_string()),
        }
    }
    Ok(out)
}

fn to_result(key: CellKey, r: Result<CellOutput>) -> CellResult {
    CellResult {
        key,
        outcome: r.map_err(|e| e.to_string()),
    }
}

/// Runs the whole grid. Cell failures are recorded and do not stop the matrix.
pub fn run_matrix(
    feeder: Arc<Feeder>,
    trajectories: Arc<ExogenousTrajectories>,
    template: &FleetTemplate,
    config: &MatrixConfig,
) -> Result<ResultSet> {
    trajectories.validate(&feeder)?;
    if config.evs.is_empty() || config.pv_kva.is_empty() || config.options.is_empty() {
        return Err(Error::InvalidArgument("empty scenario grid".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let mut keys: Vec<CellKey> = Vec::new();
    for &evs in &config.evs {
        for &pv_kva in &config.pv_kva {
            for &option in &config.options {
                let key = CellKey { evs, pv_kva, option };
                if !keys.iter().any(|k| k.order(&key) == Ordering::Equal) {
                    keys.push(key);
                }
            }
        }
    }
    keys.sort_by(|a, b| a.order(b));
    let base_key = CellKey {
        evs: 0,
        pv_kva: 0.0,
        option: SchedulingOption::FullOpt,
    };
    pool.install(|| {
        let (base, cells) = rayon::join(
            || to_result(base_key, run_cell(&feeder, &trajectories, template, base_key, config)),
            || {
                keys.par_iter()
                    .filter(|k| !k.is_base())
                    .map(|&k| to_result(k, run_cell(&feeder, &trajectories, template, k, config)))
                    .collect::<Vec<_>>()
            },
        );
        let mut cells = cells;
        for k in keys.iter().filter(|k| k.is_base()) {
            let mut shared = base.clone();
            shared.key = *k;
            if let Ok(out) = &mut shared.outcome {
                out.key = *k;
            }
            cells.push(shared);
        }
        cells.sort_by(|a, b| a.key.order(&b.key));
        Ok(ResultSet { base, cells })
    })
}

/// One row of the cost and loss-of-life comparison, $ and hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub key: CellKey,
    pub real: f64,
    pub reactive: f64,
    pub transformer: f64,
    pub total: f64,
    pub d_real: f64,
    pub d_reactive: f64,
    pub d_transformer: f64,
    pub d_total: f64,
    pub loss_of_life: f64,
}

/// Costs of every solved cell relative to the base case.
pub fn emit_cost_lol_table(results: &ResultSet) -> Result<Vec<CostRow>> {
    let base = results
        .base
        .output()
        .ok_or_else(|| Error::InvalidArgument("missing base case".into()))?
        .solution
        .cost;
    Ok(results
        .cells
        .iter()
        .filter_map(|c| c.output())
        .map(|c| {
            let k = c.solution.cost;
            CostRow {
                key: c.key,
                real: k.real,
                reactive: k.reactive,
                transformer: k.transformer,
                total: k.total(),
                d_real: k.real - base.real,
                d_reactive: k.reactive - base.reactive,
                d_transformer: k.transformer - base.transformer,
                d_total: k.total() - base.total(),
                loss_of_life: k.loss_of_life,
            }
        })
        .collect())
}

pub fn write_cost_table<W: Write>(rows: &[CostRow], w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "evs",
        "pv_kva",
        "option",
        "real",
        "reactive",
        "transformer",
        "total",
        "d_real",
        "d_reactive",
        "d_transformer",
        "d_total",
        "loss_of_life",
    ])?;
    for r in rows {
        wtr.write_record([
            r.key.evs.to_string(),
            r.key.pv_kva.to_string(),
            r.key.option.label().to_string(),
            format!("{:.4}", r.real),
            format!("{:.4}", r.reactive),
            format!("{:.4}", r.transformer),
            format!("{:.4}", r.total),
            format!("{:.4}", r.d_real),
            format!("{:.4}", r.d_reactive),
            format!("{:.4}", r.d_transformer),
            format!("{:.4}", r.d_total),
            format!("{:.4}", r.loss_of_life),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Fixed-width console rendering of the cost table.
pub fn format_cost_table(rows: &[CostRow]) -> String {
    let mut s = format!(
        "{:>4} {:>6} {:<9} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
        "EVs", "PV kVA", "option", "dP $", "dQ $", "dTrafo $", "dTotal $", "LoL h"
    );
    for r in rows {
        s.push_str(&format!(
            "{:>4} {:>6} {:<9} {:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>10.2}\n",
            r.key.evs,
            r.key.pv_kva,
            r.key.option.label(),
            r.d_real,
            r.d_reactive,
            r.d_transformer,
            r.d_total,
            r.loss_of_life
        ));
    }
    s
}

/// Hourly DLMC components at one node for every cell of one option, as CSV.
/// With `decompose`, appends the co-located transformer decomposition.
pub fn emit_dlmc_series<W: Write>(
    results: &ResultSet,
    feeder: &Feeder,
    node: NodeId,
    option: SchedulingOption,
    decompose: bool,
    w: W,
) -> Result<()> {
    let cells: Vec<&CellOutput> = results
        .cells
        .iter()
        .filter_map(|c| c.output())
        .filter(|c| c.key.option == option && c.dlmc.is_some())
        .collect();
    if cells.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no unbundled {option} cells in the result set"
        )));
    }
    let j = feeder.index_of(node)?;
    let transformer = feeder.transformer_at(j);
    if decompose && transformer.is_none() {
        return Err(Error::InvalidArgument(format!("node {node} has no transformer to decompose")));
    }
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = vec!["evs", "pv_kva", "option"];
    header.extend([
        "node",
        "hour",
        "side",
        "energy",
        "loss_p",
        "loss_q",
        "voltage",
        "ampacity",
        "transformer",
        "total",
    ]);
    if decompose {
        header.extend(["winding", "top_oil", "subsequent", "beyond_horizon"]);
    }
    wtr.write_record(&header)?;
    for c in cells {
        let report = c.dlmc.as_ref().expect("filtered above");
        for side in [Side::P, Side::Q] {
            for row in report.series(node, side) {
                let mut rec = vec![c.key.evs.to_string(), c.key.pv_kva.to_string(), option.label().to_string()];
                rec.extend(dlmc_record(&row));
                if decompose {
                    let d = c
                        .decomposition
                        .iter()
                        .find(|d| d.node == node && d.hour == row.hour && d.side == side && Some(d.transformer) == transformer)
                        .ok_or_else(|| Error::InvalidArgument(format!("no decomposition stored for {}", c.key)))?;
                    rec.extend(
                        [d.winding, d.top_oil, d.subsequent, d.beyond_horizon]
                            .iter()
                            .map(|v| format!("{v:.6}")),
                    );
                }
                wtr.write_record(&rec)?;
            }
        }
    }
    wtr.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

/// Per-transformer decomposition at one node for every cell of one option, as CSV.
pub fn emit_decomposition_series<W: Write>(
    results: &ResultSet,
    feeder: &Feeder,
    node: NodeId,
    option: SchedulingOption,
    w: W,
) -> Result<()> {
    let cells: Vec<&CellOutput> = results
        .cells
        .iter()
        .filter_map(|c| c.output())
        .filter(|c| c.key.option == option && !c.decomposition.is_empty())
        .collect();
    if cells.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no unbundled {option} cells in the result set"
        )));
    }
    if feeder.transformer_at(feeder.index_of(node)?).is_none() {
        return Err(Error::InvalidArgument(format!("node {node} has no transformer to decompose")));
    }
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = vec!["evs", "pv_kva", "option"];
    header.extend(DECOMPOSITION_HEADER);
    wtr.write_record(&header)?;
    for c in cells {
        for d in c.decomposition.iter().filter(|d| d.node == node) {
            let mut rec = vec![c.key.evs.to_string(), c.key.pv_kva.to_string(), option.label().to_string()];
            rec.extend(decomposition_record(feeder, d));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Inputs and settings persisted with every cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellInputs {
    pub key: CellKey,
    pub opf: OpfOptions,
    pub dlmc: DlmcOptions,
    #[serde(default = "enabled")]
    pub unbundle: bool,
    #[serde(default = "enabled")]
    pub verify: bool,
}

fn enabled() -> bool {
    true
}

impl CellInputs {
    pub fn config(&self) -> MatrixConfig {
        MatrixConfig {
            evs: vec![self.key.evs],
            pv_kva: vec![self.key.pv_kva],
            options: vec![self.key.option],
            opf: self.opf.clone(),
            dlmc: self.dlmc,
            jobs: 1,
            unbundle: self.unbundle,
            verify: self.verify,
        }
    }
}

fn schedule_csv(fleet: &DerFleet, s: &DerSchedule) -> Result<Vec<u8>> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["device", "index", "node", "hour", "p_kw", "q_kvar"])?;
        for (kind, p, q, nodes) in [
            ("ev", &s.ev_p, &s.ev_q, fleet.evs.iter().map(|e| e.node).collect::<Vec<_>>()),
            ("pv", &s.pv_p, &s.pv_q, fleet.pvs.iter().map(|e| e.node).collect::<Vec<_>>()),
        ] {
            for (i, node) in nodes.iter().enumerate() {
                for t in 0..p[i].len() {
                    w.write_record([
                        kind.to_string(),
                        i.to_string(),
                        node.to_string(),
                        (t + 1).to_string(),
                        format!("{:.6}", p[i][t]),
                        format!("{:.6}", q[i][t]),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    })
}

fn network_csv(feeder: &Feeder, sol: &OpfSolution) -> Result<Vec<u8>> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["hour", "node", "p", "q", "v", "l", "lambda_p", "lambda_q"])?;
        for t in 0..sol.horizon {
            for j in 0..feeder.node_count() {
                w.write_record([
                    (t + 1).to_string(),
                    feeder.id_of(j).to_string(),
                    format!("{:.9}", sol.p[t][j]),
                    format!("{:.9}", sol.q[t][j]),
                    format!("{:.9}", sol.v[t][j]),
                    format!("{:.9e}", sol.l[t][j]),
                    format!("{:.6}", sol.lambda_p[t][j]),
                    format!("{:.6}", sol.lambda_q[t][j]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    })
}

fn thermal_csv(feeder: &Feeder, sol: &OpfSolution) -> Result<Vec<u8>> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["transformer", "hour", "top_oil", "hot_spot", "aging", "loss_of_life"])?;
        for (tf, tr) in feeder.transformers().iter().zip(&sol.thermal) {
            for t in 0..tr.aging.len() {
                w.write_record([
                    tf.name.clone(),
                    (t + 1).to_string(),
                    format!("{:.6}", tr.top_oil[t + 1]),
                    format!("{:.6}", tr.hot_spot[t + 1]),
                    format!("{:.6}", tr.aging[t]),
                    format!("{:.6}", tr.loss_of_life[t]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    })
}

fn decomposition_csv(feeder: &Feeder, rows: &[TransformerComponentDecomposition]) -> Result<Vec<u8>> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(DECOMPOSITION_HEADER)?;
        for d in rows {
            w.write_record(decomposition_record(feeder, d))?;
        }
        w.flush()?;
        Ok(())
    })
}

/// Writes one cell's inputs and artifacts into `dir`.
pub fn write_cell(
    dir: &Path,
    feeder: &Feeder,
    trajectories: &ExogenousTrajectories,
    config: &MatrixConfig,
    cell: &CellResult,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(&dir.join("feeder.json"), feeder.to_json().as_bytes())?;
    write_file(
        &dir.join("trajectories.json"),
        serde_json::to_string_pretty(trajectories)?.as_bytes(),
    )?;
    let inputs = CellInputs {
        key: cell.key,
        opf: config.opf.clone(),
        dlmc: config.dlmc,
        unbundle: config.unbundle,
        verify: config.verify,
    };
    write_file(&dir.join("cell.json"), serde_json::to_string_pretty(&inputs)?.as_bytes())?;
    write_file(&dir.join("result.json"), serde_json::to_string(cell)?.as_bytes())?;
    let errors = cell.error_messages();
    if !errors.is_empty() {
        write_file(&dir.join("errors.txt"), (errors.join("\n") + "\n").as_bytes())?;
    }
    let Some(out) = cell.output() else {
        return Ok(());
    };
    let sol = &out.solution;
    write_file(&dir.join("fleet.json"), serde_json::to_string_pretty(&out.fleet)?.as_bytes())?;
    write_file(&dir.join("schedule.csv"), &schedule_csv(&out.fleet, &sol.schedule)?)?;
    write_file(&dir.join("network.csv"), &network_csv(feeder, sol)?)?;
    write_file(&dir.join("thermal.csv"), &thermal_csv(feeder, sol)?)?;
    let prices = export_price_signals(feeder, sol);
    write_file(&dir.join("prices.csv"), &csv_bytes(|b| prices.write_csv(b))?)?;
    if let Some(r) = &out.dlmc {
        write_file(&dir.join("dlmc.csv"), &csv_bytes(|b| r.write_csv(b))?)?;
    }
    if !out.decomposition.is_empty() {
        write_file(
            &dir.join("decomposition.csv"),
            &decomposition_csv(feeder, &out.decomposition)?,
        )?;
    }
    if let Some(v) = &out.verification {
        write_file(&dir.join("verification.txt"), v.to_string().as_bytes())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    key: CellKey,
    dir: String,
    ok: bool,
    errors: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Index {
    base: IndexEntry,
    cells: Vec<IndexEntry>,
}

fn entry(cell: &CellResult, dir: String) -> IndexEntry {
    IndexEntry {
        key: cell.key,
        dir,
        ok: cell.is_ok(),
        errors: cell.error_messages(),
    }
}

/// Persists the result set: one directory per cell, a `base` directory, an
/// `index.json` and the cost table.
pub fn write_result_set(
    out: &Path,
    feeder: &Feeder,
    trajectories: &ExogenousTrajectories,
    config: &MatrixConfig,
    results: &ResultSet,
) -> Result<()> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_cell(&out.join("base"), feeder, trajectories, config, &results.base)?;
    let dirs: Vec<String> = results.cells.iter().map(|c| c.key.slug()).collect();
    results
        .cells
        .par_iter()
        .zip(&dirs)
        .try_for_each(|(c, d)| write_cell(&out.join(d), feeder, trajectories, config, c))?;
    let index = Index {
        base: entry(&results.base, "base".into()),
        cells: results.cells.iter().zip(dirs).map(|(c, d)| entry(c, d)).collect(),
    };
    write_file(&out.join("index.json"), serde_json::to_string_pretty(&index)?.as_bytes())?;
    if let Ok(rows) = emit_cost_lol_table(results) {
        write_file(&out.join("cost_lol.csv"), &csv_bytes(|b| write_cost_table(&rows, b))?)?;
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: PathBuf) -> Result<T> {
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads one persisted cell with the feeder and trajectories it was run on.
pub fn load_cell(dir: &Path) -> Result<(Feeder, ExogenousTrajectories, CellResult)> {
    let feeder = crate::feeder::load_feeder(dir.join("feeder.json"))?;
    let trajectories: ExogenousTrajectories = read_json(dir.join("trajectories.json"))?;
    trajectories.validate(&feeder)?;
    Ok((feeder, trajectories, read_json(dir.join("result.json"))?))
}

/// Re-runs a persisted cell from its own inputs alone and writes it to `out`.
pub fn rerun_cell(dir: &Path, out: &Path) -> Result<CellResult> {
    let feeder = Arc::new(crate::feeder::load_feeder(dir.join("feeder.json"))?);
    let trajectories: Arc<ExogenousTrajectories> = Arc::new(read_json(dir.join("trajectories.json"))?);
    let inputs: CellInputs = read_json(dir.join("cell.json"))?;
    let fleet: DerFleet = read_json(dir.join("fleet.json"))?;
    let config = inputs.config();
    let cell = to_result(
        inputs.key,
        run_cell_with_fleet(&feeder, &trajectories, fleet, inputs.key, &config),
    );
    write_cell(out, &feeder, &trajectories, &config, &cell)?;
    Ok(cell)
}

/// Loads a result set persisted by [`write_result_set`], with its feeder.
pub fn load_result_set(out: &Path) -> Result<(Feeder, ResultSet)> {
    let path = out.join("index.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let index: Index = serde_json::from_str(&text)?;
    let feeder = crate::feeder::load_feeder(out.join(&index.base.dir).join("feeder.json"))?;
    let base = read_json(out.join(&index.base.dir).join("result.json"))?;
    let cells = index
        .cells
        .par_iter()
        .map(|e| read_json(out.join(&e.dir).join("result.json")))
        .collect::<Result<Vec<_>>>()?;
    Ok((feeder, ResultSet { base, cells }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_order_and_slug() {
        let k = |evs, pv_kva, option| CellKey { evs, pv_kva, option };
        let mut keys = [
            k(3, 0.0, SchedulingOption::FullOpt),
            k(0, 30.0, SchedulingOption::Bau),
            k(3, 0.0, SchedulingOption::Bau),
        ];
        keys.sort_by(|a, b| a.order(b));
        assert_eq!(keys[0].slug(), "ev0_pv30_bau");
        assert_eq!(keys[2].slug(), "ev3_pv0_full");
        assert!(k(0, 0.0, SchedulingOption::Tou).is_base());
    }
}
