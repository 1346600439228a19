//! Day-ahead DistFlow programs on the second-order-cone relaxation.
//!
//! Per hour `t` and non-root node `j` with parent `i`, the line `i -> j`
//! carries `P_j, Q_j` (sending end), squared current `l_j`, and `v_j` is the
//! squared voltage at `j`:
//!
//! ```text
//! P_j - sum_{k child of j} P_k - r_j l_j = p_j            (balance, dual -> P-DLMC)
//! Q_j - sum_{k child of j} Q_k - x_j l_j = q_j            (balance, dual -> Q-DLMC)
//! v_j - v_i + 2 (r_j P_j + x_j Q_j) - (r_j^2 + x_j^2) l_j = 0
//! l_j v_i >= P_j^2 + Q_j^2                                (relaxed branch cone)
//! v_min <= v_j <= v_max,   l_j <= ampacity (optional)
//! ```
//!
//! `p_j, q_j` is the net demand: base load plus EV minus PV. The root
//! voltage is a constant. The objective prices the root injection at the
//! LMP (real) and the reactive opportunity price (absolute or signed), plus
//! `c_y * sum_t F_{y,t}` when thermal rows are present.
//!
//! Duals: balance duals are returned in $/MWh. Inequality duals `mu`, `nu`
//! and the thermal multiplier `pi` are divided by the base power so that
//! multiplying them by a per-unit sensitivity yields $/MWh as well.

use serde::{Deserialize, Serialize};

use crate::der::{emit_der_block, extract_schedule, DerSchedule, DerVars};
use crate::error::{Error, Result};
use crate::feeder::Feeder;
use crate::program::{Affine, ConvexProgram, ProgramSolution, RowTag, SolveStatus, SolverSettings, VarId, VarTag};
use crate::scenario::ScenarioCase;
use crate::thermal::{emit_thermal_block, simulate_temperatures, AgingPwl, InitialTopOil, ThermalTrajectory, ThermalVars};

/// Squared-current limit on transformer lines.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum AmpacityMode {
    #[default]
    Off,
    /// Limit on current magnitude as a multiple of nominal current (`m^2 l_N` in squared units).
    CurrentMultiple(f64),
    /// Limit directly on squared current as a multiple of `l_N`.
    SquaredMultiple(f64),
}

impl AmpacityMode {
    /// Protection setting: twice the nominal current.
    pub const PROTECTION: AmpacityMode = AmpacityMode::CurrentMultiple(2.0);

    pub fn limit(self, nominal_sq_current: f64) -> Option<f64> {
        match self {
            AmpacityMode::Off => None,
            AmpacityMode::CurrentMultiple(m) => Some(m * m * nominal_sq_current),
            AmpacityMode::SquaredMultiple(m) => Some(m * nominal_sq_current),
        }
    }
}

/// How the root reactive injection is priced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ReactiveCost {
    /// `lambda_Q |Q_0|` via an import/export slack pair.
    #[default]
    Absolute,
    /// `lambda_Q Q_0`.
    Signed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfOptions {
    pub transformer_ampacity: AmpacityMode,
    /// Enforce line ampacities given in the feeder file.
    pub line_ampacity: bool,
    pub reactive_cost: ReactiveCost,
    /// Top-oil periodicity over the horizon.
    pub thermal_periodic: bool,
    pub aging: AgingPwl,
    pub solver: SolverSettings,
    /// Largest acceptable `|l v - P^2 - Q^2|`, pu.
    pub exactness_tolerance: f64,
}

impl Default for OpfOptions {
    fn default() -> Self {
        Self {
            transformer_ampacity: AmpacityMode::Off,
            line_ampacity: true,
            reactive_cost: ReactiveCost::Absolute,
            thermal_periodic: true,
            aging: AgingPwl::calibrated(),
            solver: SolverSettings::default(),
            exactness_tolerance: 1e-6,
        }
    }
}

impl OpfOptions {
    pub fn protection() -> Self {
        Self {
            transformer_ampacity: AmpacityMode::PROTECTION,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelKind {
    /// DER dispatch optimized, no thermal rows.
    PqOpt,
    /// DER dispatch optimized with thermal rows and degradation cost.
    FullOpt,
    /// DER dispatch fixed, thermal rows and degradation cost present.
    FixedSchedule,
}

/// Network variables, indexed `[hour][node]`; root entries are `None` except
/// for the root injection vectors.
#[derive(Debug, Clone)]
pub struct NetworkVars {
    pub p: Vec<Vec<Option<VarId>>>,
    pub q: Vec<Vec<Option<VarId>>>,
    pub v: Vec<Vec<Option<VarId>>>,
    pub l: Vec<Vec<Option<VarId>>>,
    pub root_p: Vec<VarId>,
    /// `(import, export)` for absolute pricing, `(q, q)` when signed.
    pub root_q: Vec<(VarId, VarId)>,
}

/// A built program together with the handles needed to read results back.
#[derive(Debug, Clone)]
pub struct OpfModel {
    pub kind: ModelKind,
    pub program: ConvexProgram,
    pub network: NetworkVars,
    pub der: Option<DerVars>,
    pub thermal: Vec<ThermalVars>,
    pub fixed: Option<DerSchedule>,
    pub options: OpfOptions,
}

fn affine_or_const(v: Option<VarId>, constant: f64) -> Affine {
    match v {
        Some(v) => Affine::var(v, 1.0),
        None => Affine::constant(constant),
    }
}

fn build(scenario: &ScenarioCase, options: &OpfOptions, kind: ModelKind, fixed: Option<&DerSchedule>) -> Result<OpfModel> {
    let feeder = &scenario.feeder;
    let traj = &scenario.trajectories;
    let horizon = traj.horizon;
    let n = feeder.node_count();
    let base = feeder.base;
    let s_mva = base.power_mva();
    let v0 = feeder.root_v();
    let mut prog = ConvexProgram::new();

    let der = match (&kind, fixed) {
        (ModelKind::FixedSchedule, _) => None,
        _ => Some(emit_der_block(&mut prog, &scenario.fleet, &base, &traj.pv_factor)),
    };
    let (fixed_p, fixed_q) = match fixed {
        Some(s) => s.net_demand(feeder, &scenario.fleet, horizon)?,
        None => (vec![vec![0.0; n]; horizon], vec![vec![0.0; n]; horizon]),
    };
    // device variables entering each node balance: (var, sign)
    let mut dev_p: Vec<Vec<Vec<(VarId, f64)>>> = vec![vec![Vec::new(); n]; horizon];
    let mut dev_q: Vec<Vec<Vec<(VarId, f64)>>> = vec![vec![Vec::new(); n]; horizon];
    if let Some(d) = &der {
        for (e, ev) in scenario.fleet.evs.iter().enumerate() {
            let j = feeder.index_of(ev.node)?;
            for t in 0..horizon {
                if let (Some(p), Some(q)) = (d.evs[e].p[t], d.evs[e].q[t]) {
                    dev_p[t][j].push((p, -1.0));
                    dev_q[t][j].push((q, -1.0));
                }
            }
        }
        for (s, pv) in scenario.fleet.pvs.iter().enumerate() {
            let j = feeder.index_of(pv.node)?;
            for t in 0..horizon {
                dev_p[t][j].push((d.pvs[s].p[t], 1.0));
                dev_q[t][j].push((d.pvs[s].q[t], 1.0));
            }
        }
    }

    let mut net = NetworkVars {
        p: vec![vec![None; n]; horizon],
        q: vec![vec![None; n]; horizon],
        v: vec![vec![None; n]; horizon],
        l: vec![vec![None; n]; horizon],
        root_p: Vec::with_capacity(horizon),
        root_q: Vec::with_capacity(horizon),
    };
    for t in 0..horizon {
        for &j in &feeder.topological_order()[1..] {
            net.p[t][j] = Some(prog.add_var(VarTag::P { node: j, hour: t }));
            net.q[t][j] = Some(prog.add_var(VarTag::Q { node: j, hour: t }));
            net.v[t][j] = Some(prog.add_var(VarTag::V { node: j, hour: t }));
            net.l[t][j] = Some(prog.add_var(VarTag::L { node: j, hour: t }));
        }
        let p0 = prog.add_var(VarTag::RootP { hour: t });
        prog.add_cost(p0, traj.lmp[t] * s_mva);
        net.root_p.push(p0);
        let q0 = match options.reactive_cost {
            ReactiveCost::Absolute => {
                let imp = prog.add_var(VarTag::RootQImport { hour: t });
                let exp = prog.add_var(VarTag::RootQExport { hour: t });
                prog.add_nonneg(imp);
                prog.add_nonneg(exp);
                prog.add_cost(imp, traj.q_price[t] * s_mva);
                prog.add_cost(exp, traj.q_price[t] * s_mva);
                (imp, exp)
            }
            ReactiveCost::Signed => {
                let q = prog.add_var(VarTag::RootQ { hour: t });
                prog.add_cost(q, traj.q_price[t] * s_mva);
                (q, q)
            }
        };
        net.root_q.push(q0);
    }

    for t in 0..horizon {
        // root balances
        let mut tp = vec![(net.root_p[t], 1.0)];
        let (qi, qe) = net.root_q[t];
        let mut tq = if qi == qe {
            vec![(qi, 1.0)]
        } else {
            vec![(qi, 1.0), (qe, -1.0)]
        };
        for &k in feeder.children(0) {
            tp.push((net.p[t][k].unwrap(), -1.0));
            tq.push((net.q[t][k].unwrap(), -1.0));
        }
        tp.extend(dev_p[t][0].iter().copied());
        tq.extend(dev_q[t][0].iter().copied());
        prog.add_eq(RowTag::RootBalanceP { hour: t }, tp, traj.load_p[t][0] + fixed_p[t][0]);
        prog.add_eq(RowTag::RootBalanceQ { hour: t }, tq, traj.load_q[t][0] + fixed_q[t][0]);

        for &j in &feeder.topological_order()[1..] {
            let line = feeder.line_into(j);
            let i = feeder.parent(j).unwrap();
            let (pj, qj, vj, lj) = (
                net.p[t][j].unwrap(),
                net.q[t][j].unwrap(),
                net.v[t][j].unwrap(),
                net.l[t][j].unwrap(),
            );
            let mut tp = vec![(pj, 1.0), (lj, -line.r)];
            let mut tq = vec![(qj, 1.0), (lj, -line.x)];
            for &k in feeder.children(j) {
                tp.push((net.p[t][k].unwrap(), -1.0));
                tq.push((net.q[t][k].unwrap(), -1.0));
            }
            tp.extend(dev_p[t][j].iter().copied());
            tq.extend(dev_q[t][j].iter().copied());
            prog.add_eq(RowTag::BalanceP { node: j, hour: t }, tp, traj.load_p[t][j] + fixed_p[t][j]);
            prog.add_eq(RowTag::BalanceQ { node: j, hour: t }, tq, traj.load_q[t][j] + fixed_q[t][j]);

            let z2 = line.r * line.r + line.x * line.x;
            let mut tv = vec![(vj, 1.0), (pj, 2.0 * line.r), (qj, 2.0 * line.x), (lj, -z2)];
            let rhs = match net.v[t][i] {
                Some(vi) => {
                    tv.push((vi, -1.0));
                    0.0
                }
                None => v0,
            };
            prog.add_eq(RowTag::VoltageDrop { node: j, hour: t }, tv, rhs);
            prog.add_le(
                RowTag::VoltageUpper { node: j, hour: t },
                vec![(vj, 1.0)],
                feeder.limits.v_max,
            );
            prog.add_le(
                RowTag::VoltageLower { node: j, hour: t },
                vec![(vj, -1.0)],
                -feeder.limits.v_min,
            );

            // l v_i >= P^2 + Q^2  <=>  ||(2P, 2Q, l - v_i)|| <= l + v_i
            let vi = affine_or_const(net.v[t][i], v0);
            let head = Affine::terms([vec![(lj, 1.0)], vi.terms.clone()].concat(), vi.constant);
            let diff = Affine::terms(
                [vec![(lj, 1.0)], vi.terms.iter().map(|&(v, c)| (v, -c)).collect()].concat(),
                -vi.constant,
            );
            prog.add_soc(
                RowTag::BranchCone { node: j, hour: t },
                head,
                vec![Affine::var(pj, 2.0), Affine::var(qj, 2.0), diff],
            );

            let mut limit: Option<f64> = None;
            if options.line_ampacity {
                limit = line.ampacity;
            }
            if let Some(y) = line.transformer {
                if let Some(lim) = options
                    .transformer_ampacity
                    .limit(feeder.transformers()[y].nominal_sq_current())
                {
                    limit = Some(limit.map_or(lim, |l: f64| l.min(lim)));
                }
            }
            if let Some(lim) = limit {
                prog.add_le(RowTag::Ampacity { node: j, hour: t }, vec![(lj, 1.0)], lim);
            }
        }
    }

    let mut thermal = Vec::new();
    if matches!(kind, ModelKind::FullOpt | ModelKind::FixedSchedule) {
        for (y, tf) in feeder.transformers().iter().enumerate() {
            let l: Vec<VarId> = (0..horizon).map(|t| net.l[t][tf.node].unwrap()).collect();
            thermal.push(emit_thermal_block(
                &mut prog,
                y,
                &tf.thermal,
                &options.aging,
                &l,
                &traj.ambient,
                options.thermal_periodic,
            ));
        }
    }

    Ok(OpfModel {
        kind,
        program: prog,
        network: net,
        der,
        thermal,
        fixed: fixed.cloned(),
        options: options.clone(),
    })
}

/// Network and DER rows with the root cost; no thermal rows.
pub fn build_branch_flow(scenario: &ScenarioCase, options: &OpfOptions) -> Result<OpfModel> {
    build(scenario, options, ModelKind::PqOpt, None)
}

/// Minimizes real and reactive cost; temperatures are simulated after the fact.
pub fn build_pq_opt(scenario: &ScenarioCase, options: &OpfOptions) -> Result<OpfModel> {
    build_branch_flow(scenario, options)
}

/// Co-optimizes DER dispatch with transformer degradation.
pub fn build_full_opt(scenario: &ScenarioCase, options: &OpfOptions) -> Result<OpfModel> {
    build(scenario, options, ModelKind::FullOpt, None)
}

/// Network and thermal rows with the DER dispatch folded into the nodal net demand.
pub fn build_fixed_schedule(scenario: &ScenarioCase, schedule: &DerSchedule, options: &OpfOptions) -> Result<OpfModel> {
    build(scenario, options, ModelKind::FixedSchedule, Some(schedule))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// Real power purchased at the root, $.
    pub real: f64,
    /// Reactive power at the root under the configured pricing, $.
    pub reactive: f64,
    /// Degradation cost `sum_y c_y LoL_y`, $.
    pub transformer: f64,
    /// Aggregate loss of life of all monitored transformers, hours.
    pub loss_of_life: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.real + self.reactive + self.transformer
    }

    pub fn power(&self) -> f64 {
        self.real + self.reactive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exactness {
    /// `max |l v_i - P^2 - Q^2|` over all lines and hours, pu.
    pub residual: f64,
    pub node: usize,
    pub hour: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpfSolution {
    pub kind: ModelKind,
    pub status: SolveStatus,
    pub horizon: usize,
    pub base_mva: f64,
    pub root_voltage: f64,
    pub objective: f64,
    pub duality_gap: f64,
    pub iterations: u32,
    pub solve_time: f64,
    /// Indexed `[hour][node]`; the root entry holds the root injection.
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    /// Squared voltage; the root entry is the fixed root voltage.
    pub v: Vec<Vec<f64>>,
    /// Squared current of the line into each node; zero at the root.
    pub l: Vec<Vec<f64>>,
    /// Net demand (base load plus devices), pu, `[hour][node]`.
    pub net_p: Vec<Vec<f64>>,
    pub net_q: Vec<Vec<f64>>,
    pub schedule: DerSchedule,
    /// Per transformer, simulated from the solution's currents.
    pub thermal: Vec<ThermalTrajectory>,
    /// Balance duals, $/MWh, `[hour][node]`.
    pub lambda_p: Vec<Vec<f64>>,
    pub lambda_q: Vec<Vec<f64>>,
    /// Voltage bound duals divided by base power, `[hour][node]`.
    pub mu_upper: Vec<Vec<f64>>,
    pub mu_lower: Vec<Vec<f64>>,
    /// Ampacity duals divided by base power, `[hour][node]`.
    pub nu: Vec<Vec<f64>>,
    /// Aging segment duals, $ per unit of aging, `[transformer][hour][segment]`.
    pub xi: Vec<Vec<Vec<f64>>>,
    /// Top-oil periodicity duals, `[transformer]`.
    pub rho: Vec<f64>,
    /// Marginal cost of squared current on each transformer line divided by base power, `[transformer][hour]`.
    pub pi: Vec<Vec<f64>>,
    pub exactness: Exactness,
    pub cost: CostBreakdown,
}

impl OpfSolution {
    pub fn is_exact(&self, tol: f64) -> bool {
        self.exactness.residual <= tol
    }

    /// Adjusted aging slope `sum_k xi_k alpha_k / c_y`; zero when `c_y = 0`.
    pub fn adjusted_slopes(&self, feeder: &Feeder, aging: &AgingPwl, transformer: usize) -> Vec<f64> {
        let c = feeder.transformers()[transformer].thermal.cost_per_hour;
        self.xi
            .get(transformer)
            .map(|rows| {
                rows.iter()
                    .map(|xi| {
                        if c > 0.0 {
                            xi.iter().zip(aging.segments()).map(|(z, s)| z * s.slope).sum::<f64>() / c
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Tightening steps applied when a solve stops before the relaxation is tight.
pub const TIGHTENING_STEPS: usize = 2;

/// Solves a built model and extracts primal values, duals and costs.
///
/// A cone slack on a line with little resistance barely moves the objective,
/// so a gap-based stop can leave it open. Such solves are repeated with all
/// tolerances tightened tenfold, at most [`TIGHTENING_STEPS`] times.
pub fn solve(model: &OpfModel, scenario: &ScenarioCase) -> Result<OpfSolution> {
    let mut settings = model.options.solver;
    let mut step = 0;
    let (mut time, mut iterations) = (0.0, 0);
    loop {
        let sol = model.program.solve(&settings)?;
        time += sol.solve_time;
        iterations += sol.iterations;
        if !sol.status.is_usable(&settings) {
            return Err(Error::Solver {
                tag: scenario.label(),
                status: sol.status,
            });
        }
        let mut out = extract(model, scenario, &sol)?;
        out.solve_time = time;
        out.iterations = iterations;
        if out.is_exact(model.options.exactness_tolerance) {
            return Ok(out);
        }
        if step == TIGHTENING_STEPS {
            log::warn!(
                "{}: relaxation not exact at line into node {} hour {} (residual {:.3e})",
                scenario.label(),
                scenario.feeder.id_of(out.exactness.node),
                out.exactness.hour + 1,
                out.exactness.residual
            );
            return Ok(out);
        }
        step += 1;
        settings.tol_gap_abs *= 0.1;
        settings.tol_gap_rel *= 0.1;
        settings.tol_feas *= 0.1;
    }
}

fn extract(model: &OpfModel, scenario: &ScenarioCase, sol: &ProgramSolution) -> Result<OpfSolution> {
    let feeder = &scenario.feeder;
    let traj = &scenario.trajectories;
    let prog = &model.program;
    let horizon = traj.horizon;
    let n = feeder.node_count();
    let s_mva = feeder.base.power_mva();
    let v0 = feeder.root_v();
    let x = &sol.x;
    let dual = |tag: RowTag| prog.row(tag).map_or(0.0, |r| sol.dual(r));

    let val = |v: Option<VarId>| v.map_or(0.0, |v| x[v.0]);
    let mut p = vec![vec![0.0; n]; horizon];
    let mut q = vec![vec![0.0; n]; horizon];
    let mut v = vec![vec![v0; n]; horizon];
    let mut l = vec![vec![0.0; n]; horizon];
    let mut lambda_p = vec![vec![0.0; n]; horizon];
    let mut lambda_q = vec![vec![0.0; n]; horizon];
    let mut mu_upper = vec![vec![0.0; n]; horizon];
    let mut mu_lower = vec![vec![0.0; n]; horizon];
    let mut nu = vec![vec![0.0; n]; horizon];
    let mut exact = Exactness {
        residual: 0.0,
        node: 0,
        hour: 0,
    };
    let mut real_cost = 0.0;
    let mut reactive_cost = 0.0;
    for t in 0..horizon {
        let (qi, qe) = model.network.root_q[t];
        p[t][0] = x[model.network.root_p[t].0];
        q[t][0] = if qi == qe { x[qi.0] } else { x[qi.0] - x[qe.0] };
        real_cost += traj.lmp[t] * s_mva * p[t][0];
        reactive_cost += traj.q_price[t]
            * s_mva
            * match model.options.reactive_cost {
                ReactiveCost::Absolute => q[t][0].abs(),
                ReactiveCost::Signed => q[t][0],
            };
        lambda_p[t][0] = -dual(RowTag::RootBalanceP { hour: t }) / s_mva;
        lambda_q[t][0] = -dual(RowTag::RootBalanceQ { hour: t }) / s_mva;
        for j in 1..n {
            p[t][j] = val(model.network.p[t][j]);
            q[t][j] = val(model.network.q[t][j]);
            v[t][j] = val(model.network.v[t][j]);
            l[t][j] = val(model.network.l[t][j]);
            lambda_p[t][j] = -dual(RowTag::BalanceP { node: j, hour: t }) / s_mva;
            lambda_q[t][j] = -dual(RowTag::BalanceQ { node: j, hour: t }) / s_mva;
            mu_upper[t][j] = dual(RowTag::VoltageUpper { node: j, hour: t }) / s_mva;
            mu_lower[t][j] = dual(RowTag::VoltageLower { node: j, hour: t }) / s_mva;
            nu[t][j] = dual(RowTag::Ampacity { node: j, hour: t }) / s_mva;
        }
        for j in 1..n {
            let i = feeder.parent(j).unwrap();
            let r = (l[t][j] * v[t][i] - p[t][j].powi(2) - q[t][j].powi(2)).abs();
            if r > exact.residual {
                exact = Exactness {
                    residual: r,
                    node: j,
                    hour: t,
                };
            }
        }
    }

    let schedule = match (&model.der, &model.fixed) {
        (Some(d), _) => extract_schedule(d, x, &feeder.base, horizon),
        (None, Some(s)) => s.clone(),
        (None, None) => DerSchedule::zeros(&scenario.fleet, horizon),
    };
    let (dev_p, dev_q) = schedule.net_demand(feeder, &scenario.fleet, scenario.horizon())?;
    let mut net_p = traj.load_p.clone();
    let mut net_q = traj.load_q.clone();
    if !scenario.fleet.is_empty() {
        for t in 0..horizon {
            for j in 0..n {
                net_p[t][j] += dev_p[t][j];
                net_q[t][j] += dev_q[t][j];
            }
        }
    }

    let mut thermal = Vec::new();
    let mut xi = Vec::new();
    let mut rho = Vec::new();
    let mut pi = Vec::new();
    let mut transformer_cost = 0.0;
    let mut lol = 0.0;
    let segments = model.options.aging.segments().len();
    for (y, tf) in feeder.transformers().iter().enumerate() {
        let load: Vec<f64> = (0..horizon).map(|t| l[t][tf.node]).collect();
        let traj_y = simulate_temperatures(
            &tf.thermal,
            &model.options.aging,
            &load,
            &traj.ambient,
            InitialTopOil::Periodic,
        );
        lol += traj_y.total_loss_of_life();
        transformer_cost += tf.thermal.cost_per_hour * traj_y.total_loss_of_life();
        thermal.push(traj_y);
        if model.thermal.is_empty() {
            xi.push(vec![vec![0.0; segments]; horizon]);
            rho.push(0.0);
            pi.push(vec![0.0; horizon]);
            continue;
        }
        xi.push(
            (0..horizon)
                .map(|t| {
                    (0..segments)
                        .map(|segment| {
                            dual(RowTag::AgingSegment {
                                transformer: y,
                                hour: t,
                                segment,
                            })
                        })
                        .collect()
                })
                .collect(),
        );
        rho.push(dual(RowTag::ThermalPeriodicity { transformer: y }));
        let (k_to, k_h) = (tf.thermal.top_oil_gain(), tf.thermal.winding_gain());
        pi.push(
            (0..horizon)
                .map(|t| {
                    let z_to = dual(RowTag::TopOilRecurrence { transformer: y, hour: t });
                    let z_h = dual(RowTag::HotSpotDefinition { transformer: y, hour: t });
                    -(k_to * z_to + k_h * z_h) / s_mva
                })
                .collect(),
        );
    }

    Ok(OpfSolution {
        kind: model.kind.clone(),
        status: sol.status,
        horizon,
        base_mva: s_mva,
        root_voltage: v0,
        objective: sol.primal_objective,
        duality_gap: sol.duality_gap(),
        iterations: sol.iterations,
        solve_time: sol.solve_time,
        p,
        q,
        v,
        l,
        net_p,
        net_q,
        schedule,
        thermal,
        lambda_p,
        lambda_q,
        mu_upper,
        mu_lower,
        nu,
        xi,
        rho,
        pi,
        exactness: exact,
        cost: CostBreakdown {
            real: real_cost,
            reactive: reactive_cost,
            transformer: transformer_cost,
            loss_of_life: lol,
        },
    })
}

/// Solves PQ-opt for the scenario.
pub fn solve_pq_opt(scenario: &ScenarioCase, options: &OpfOptions) -> Result<OpfSolution> {
    solve(&build_pq_opt(scenario, options)?, scenario)
}

/// Solves Full-opt for the scenario.
pub fn solve_full_opt(scenario: &ScenarioCase, options: &OpfOptions) -> Result<OpfSolution> {
    solve(&build_full_opt(scenario, options)?, scenario)
}

/// Prices a fixed device dispatch: network and thermal variables are free,
/// devices are held at the given schedule.
pub fn price_fixed_schedule(scenario: &ScenarioCase, schedule: &DerSchedule, options: &OpfOptions) -> Result<OpfSolution> {
    solve(&build_fixed_schedule(scenario, schedule, options)?, scenario)
}
