//! Device self-scheduling against posted nodal prices.
//!
//! A PV maximizes `sum_t lambda^P_t p_t + lambda^Q_t q_t` over its hourly
//! capability sets; an EV minimizes `sum_t lambda^P_t p_t + lambda^Q_t q_t`
//! over its intertemporal feasible set. When the posted prices are the
//! co-optimization's own nodal marginal costs, each device's self-scheduled
//! optimum equals the value of its co-optimized dispatch at those prices.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::der::{emit_ev, DerSchedule, Ev, Pv};
use crate::dlmc::{export_price_signals, PriceSignals};
use crate::error::{Error, Result};
use crate::feeder::NodeId;
use crate::opf::OpfSolution;
use crate::program::{ConvexProgram, SolverSettings};
use crate::scenario::ScenarioCase;
use crate::units::PerUnitBase;

/// Hourly dispatch of one device, kW / kVAr, and its value at the posted prices, $.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceDispatch {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub objective: f64,
}

/// Value of a dispatch at prices in $/MWh; kW over one hour.
pub fn dispatch_value(lambda_p: &[f64], lambda_q: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let mut v = 0.0;
    for t in 0..p.len() {
        v += (lambda_p[t] * p[t] + lambda_q[t] * q[t]) / 1000.0;
    }
    v
}

/// Revenue-maximizing point of `{0 <= p <= avail, p^2 + q^2 <= s^2}` for the price vector `(cp, cq)`.
pub fn pv_hour(cp: f64, cq: f64, avail: f64, s: f64) -> (f64, f64) {
    let avail = avail.clamp(0.0, s);
    if cp <= 0.0 {
        let q = if cq > 0.0 {
            s
        } else if cq < 0.0 {
            -s
        } else {
            0.0
        };
        return (0.0, q);
    }
    let norm = cp.hypot(cq);
    let p = s * cp / norm;
    if p <= avail {
        return (p, s * cq / norm);
    }
    let reach = (s * s - avail * avail).max(0.0).sqrt();
    let q = if cq == 0.0 { 0.0 } else { reach.copysign(cq) };
    (avail, q)
}

/// PV self-schedule; hours are independent.
pub fn pv_opt(lambda_p: &[f64], lambda_q: &[f64], pv: &Pv, pv_factor: &[f64]) -> DeviceDispatch {
    let (p, q): (Vec<f64>, Vec<f64>) = (0..pv_factor.len())
        .map(|t| pv_hour(lambda_p[t], lambda_q[t], pv_factor[t] * pv.kva, pv.kva))
        .unzip();
    let objective = dispatch_value(lambda_p, lambda_q, &p, &q);
    DeviceDispatch { p, q, objective }
}

/// EV self-schedule: minimum-cost dispatch over the EV's feasible set.
pub fn ev_opt(
    lambda_p: &[f64],
    lambda_q: &[f64],
    ev: &Ev,
    base: &PerUnitBase,
    settings: &SolverSettings,
) -> Result<DeviceDispatch> {
    let horizon = lambda_p.len();
    ev.validate(horizon)?;
    let mut prog = ConvexProgram::new();
    let vars = emit_ev(&mut prog, 0, ev, base, horizon);
    let scale = base.power_mva();
    for t in 0..horizon {
        if let (Some(p), Some(q)) = (vars.p[t], vars.q[t]) {
            prog.add_cost(p, lambda_p[t] * scale);
            prog.add_cost(q, lambda_q[t] * scale);
        }
    }
    let sol = prog.solve(settings)?;
    if !sol.status.is_usable(settings) {
        return Err(Error::Solver {
            tag: format!("self-schedule of EV at node {}", ev.node),
            status: sol.status,
        });
    }
    let kw = |v: Option<crate::program::VarId>| v.map_or(0.0, |v| base.pu_to_kva(sol.value(v)));
    let p: Vec<f64> = vars.p.iter().map(|&v| kw(v)).collect();
    let q: Vec<f64> = vars.q.iter().map(|&v| kw(v)).collect();
    let objective = dispatch_value(lambda_p, lambda_q, &p, &q);
    Ok(DeviceDispatch { p, q, objective })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Device {
    Ev(usize),
    Pv(usize),
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Device::Ev(i) => write!(f, "EV {i}"),
            Device::Pv(i) => write!(f, "PV {i}"),
        }
    }
}

/// Comparison of one device's self-schedule with its reference dispatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceCheck {
    pub device: Device,
    pub node: NodeId,
    /// Value of the reference dispatch at the posted prices, $ (cost for EVs, revenue for PV).
    pub imputed: f64,
    /// Optimal self-scheduled value, $.
    pub self_scheduled: f64,
    pub relative_error: f64,
    /// Largest hourly `|p|` or `|q|` difference between the two dispatches, kW.
    pub schedule_deviation: f64,
    pub passed: bool,
    /// Set when the self-scheduling problem could not be solved.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub tolerance: f64,
    pub devices: Vec<DeviceCheck>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.devices.iter().all(|d| d.passed)
    }

    pub fn worst_error(&self) -> f64 {
        self.devices.iter().map(|d| d.relative_error).fold(0.0, f64::max)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "self-scheduling check: {} devices, tolerance {:.1e}, {}",
            self.devices.len(),
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        )?;
        for d in &self.devices {
            write!(
                f,
                "  {:<6} node {:<6} imputed {:>12.6} self {:>12.6} rel {:.2e} max dev {:.3} kW {}",
                d.device.to_string(),
                d.node.to_string(),
                d.imputed,
                d.self_scheduled,
                d.relative_error,
                d.schedule_deviation,
                if d.passed { "ok" } else { "MISMATCH" }
            )?;
            if let Some(e) = &d.error {
                write!(f, " ({e})")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Relative value mismatch; values below 1e-6 $ in magnitude count as zero.
fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn max_deviation(a: &DeviceDispatch, p: &[f64], q: &[f64]) -> f64 {
    a.p.iter()
        .zip(p)
        .chain(a.q.iter().zip(q))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Self-schedules every device at the posted prices and compares the optimum
/// with the value of `reference` at the same prices.
pub fn verify_against(
    scenario: &ScenarioCase,
    prices: &PriceSignals,
    reference: &DerSchedule,
    settings: &SolverSettings,
    tolerance: f64,
) -> Result<VerificationReport> {
    let base = scenario.feeder.base;
    let pv_factor = &scenario.trajectories.pv_factor;
    let at = |node: NodeId| prices.at(node).ok_or(Error::UnknownNode(node.0));
    let mut jobs: Vec<(Device, NodeId)> = Vec::new();
    jobs.extend(scenario.fleet.evs.iter().enumerate().map(|(i, e)| (Device::Ev(i), e.node)));
    jobs.extend(scenario.fleet.pvs.iter().enumerate().map(|(i, s)| (Device::Pv(i), s.node)));
    for &(_, node) in &jobs {
        at(node)?;
    }
    let devices = jobs
        .par_iter()
        .map(|&(device, node)| {
            let (lp, lq) = at(node).expect("checked above");
            let (rp, rq, outcome) = match device {
                Device::Ev(i) => (
                    &reference.ev_p[i],
                    &reference.ev_q[i],
                    ev_opt(lp, lq, &scenario.fleet.evs[i], &base, settings),
                ),
                Device::Pv(i) => (
                    &reference.pv_p[i],
                    &reference.pv_q[i],
                    Ok(pv_opt(lp, lq, &scenario.fleet.pvs[i], pv_factor)),
                ),
            };
            let imputed = dispatch_value(lp, lq, rp, rq);
            match outcome {
                Ok(d) => {
                    let relative_error = relative(d.objective, imputed);
                    DeviceCheck {
                        device,
                        node,
                        imputed,
                        self_scheduled: d.objective,
                        relative_error,
                        schedule_deviation: max_deviation(&d, rp, rq),
                        passed: relative_error <= tolerance,
                        error: None,
                    }
                }
                Err(e) => DeviceCheck {
                    device,
                    node,
                    imputed,
                    self_scheduled: f64::NAN,
                    relative_error: f64::INFINITY,
                    schedule_deviation: f64::NAN,
                    passed: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(VerificationReport { tolerance, devices })
}

/// Checks that the co-optimized dispatch is each device's own optimum at the
/// exported nodal prices.
pub fn verify_fixed_point(
    solution: &OpfSolution,
    scenario: &ScenarioCase,
    settings: &SolverSettings,
) -> Result<VerificationReport> {
    let prices = export_price_signals(&scenario.feeder, solution);
    verify_against(scenario, &prices, &solution.schedule, settings, 1e-6)
}
