//! EV and PV device models, their feasible sets, and open-loop schedulers.
//!
//! Hours are labeled `1..=T`; hour `h` covers the interval `[h-1, h)`. An EV
//! charges during the hours `plug_in..=departure` (wrapping past `T`) and the
//! driven energy leaves the battery in the hour after departure. Device
//! quantities are kW / kVAr / kWh; program variables are per unit.
//!
//! Sign conventions: EV real power is consumption, PV real power is
//! production, EV reactive power is consumption (negative when providing),
//! PV reactive power is production.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feeder::{Feeder, NodeId};
use crate::program::{Affine, ConvexProgram, RowTag, VarId, VarTag};
use crate::units::PerUnitBase;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ev {
    pub node: NodeId,
    /// First charging hour.
    pub plug_in: usize,
    /// Last charging hour; the battery must hold `arrival + energy` at its end.
    pub departure: usize,
    /// Energy to deliver per cycle, kWh.
    pub energy_kwh: f64,
    pub capacity_kwh: f64,
    pub max_rate_kw: f64,
    pub charger_kva: f64,
    /// State of charge when plugging in, kWh; defaults to `capacity - energy`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrival_soc_kwh: Option<f64>,
}

impl Ev {
    pub fn arrival_soc(&self) -> f64 {
        self.arrival_soc_kwh.unwrap_or(self.capacity_kwh - self.energy_kwh)
    }

    /// Zero-based hour indices of the charging window, in plug-in order.
    pub fn window(&self, horizon: usize) -> Vec<usize> {
        let start = self.plug_in - 1;
        let len = self.window_len(horizon);
        (0..len).map(|k| (start + k) % horizon).collect()
    }

    pub fn window_len(&self, horizon: usize) -> usize {
        if self.departure >= self.plug_in {
            self.departure - self.plug_in + 1
        } else {
            horizon - self.plug_in + 1 + self.departure
        }
    }

    pub fn in_window(&self, hour: usize, horizon: usize) -> bool {
        self.window(horizon).contains(&hour)
    }

    /// Zero-based hour in which the trip energy leaves the battery.
    pub fn drain_hour(&self, horizon: usize) -> usize {
        self.departure % horizon
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleWindow(format!("EV at node {}: {m}", self.node)));
        if !(1..=horizon).contains(&self.plug_in) || !(1..=horizon).contains(&self.departure) {
            return bad(format!("plug-in/departure hours must lie in 1..={horizon}"));
        }
        if self.window_len(horizon) >= horizon {
            return bad("charging window must leave at least one hour unplugged".into());
        }
        if !(self.energy_kwh >= 0.0 && self.capacity_kwh > 0.0 && self.max_rate_kw > 0.0 && self.charger_kva > 0.0) {
            return bad("energy, capacity, rate and charger size must be positive".into());
        }
        if self.max_rate_kw > self.charger_kva {
            return bad(format!(
                "rate {} kW exceeds charger {} kVA",
                self.max_rate_kw, self.charger_kva
            ));
        }
        let arrival = self.arrival_soc();
        if arrival < -1e-12 || arrival + self.energy_kwh > self.capacity_kwh + 1e-9 {
            return bad(format!(
                "arrival {arrival} kWh plus requirement {} kWh does not fit capacity {} kWh",
                self.energy_kwh, self.capacity_kwh
            ));
        }
        let deliverable = self.window_len(horizon) as f64 * self.max_rate_kw;
        if deliverable + 1e-9 < self.energy_kwh {
            return bad(format!(
                "window delivers at most {deliverable} kWh, {} kWh required",
                self.energy_kwh
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pv {
    pub node: NodeId,
    pub kva: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DerFleet {
    #[serde(default)]
    pub evs: Vec<Ev>,
    #[serde(default)]
    pub pvs: Vec<Pv>,
}

impl DerFleet {
    pub fn is_empty(&self) -> bool {
        self.evs.is_empty() && self.pvs.is_empty()
    }

    /// Folds from +0.0 so that an empty fleet reports 0, not -0.
    pub fn total_pv_kva(&self) -> f64 {
        self.pvs.iter().fold(0.0, |acc, p| acc + p.kva)
    }

    pub fn validate(&self, feeder: &Feeder, horizon: usize) -> Result<()> {
        for ev in &self.evs {
            check_node(feeder, ev.node)?;
            ev.validate(horizon)?;
        }
        for pv in &self.pvs {
            check_node(feeder, pv.node)?;
            if !(pv.kva > 0.0) {
                return Err(Error::InvalidFleet(format!("PV at node {} has non-positive size", pv.node)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn check_node(feeder: &Feeder, node: NodeId) -> Result<()> {
    match feeder.index_of(node) {
        Ok(0) => Err(Error::InvalidFleet(format!("device placed on the root node {node}"))),
        Ok(_) => Ok(()),
        Err(_) => Err(Error::UnknownNode(node.0)),
    }
}

/// Device template of one connection point; a grid cell instantiates
/// identical EVs and PV units of `pv_unit_kva` at the site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteTemplate {
    pub ev: Ev,
    pub pv_unit_kva: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetTemplate {
    pub sites: Vec<SiteTemplate>,
}

impl FleetTemplate {
    /// `evs` vehicles and `pv_kva` of PV at every site. PV capacity is split
    /// into whole units plus one remainder unit.
    pub fn instantiate(&self, evs: usize, pv_kva: f64) -> DerFleet {
        let mut fleet = DerFleet::default();
        for site in &self.sites {
            fleet.evs.extend(std::iter::repeat_n(site.ev.clone(), evs));
            let mut remaining = pv_kva;
            while remaining > 1e-9 {
                let kva = remaining.min(site.pv_unit_kva);
                fleet.pvs.push(Pv { node: site.ev.node, kva });
                remaining -= kva;
            }
        }
        fleet
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Hourly device dispatch in kW / kVAr, indexed `[device][hour]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerSchedule {
    pub ev_p: Vec<Vec<f64>>,
    pub ev_q: Vec<Vec<f64>>,
    pub pv_p: Vec<Vec<f64>>,
    pub pv_q: Vec<Vec<f64>>,
}

impl DerSchedule {
    pub fn zeros(fleet: &DerFleet, horizon: usize) -> Self {
        Self {
            ev_p: vec![vec![0.0; horizon]; fleet.evs.len()],
            ev_q: vec![vec![0.0; horizon]; fleet.evs.len()],
            pv_p: vec![vec![0.0; horizon]; fleet.pvs.len()],
            pv_q: vec![vec![0.0; horizon]; fleet.pvs.len()],
        }
    }

    /// Net real and reactive demand added by the devices, pu, indexed `[hour][node]`.
    pub fn net_demand(&self, feeder: &Feeder, fleet: &DerFleet, horizon: usize) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let base = feeder.base;
        let mut p = vec![vec![0.0; feeder.node_count()]; horizon];
        let mut q = vec![vec![0.0; feeder.node_count()]; horizon];
        for (e, ev) in fleet.evs.iter().enumerate() {
            let j = feeder.index_of(ev.node)?;
            for t in 0..horizon {
                p[t][j] += base.kva_to_pu(self.ev_p[e][t]);
                q[t][j] += base.kva_to_pu(self.ev_q[e][t]);
            }
        }
        for (s, pv) in fleet.pvs.iter().enumerate() {
            let j = feeder.index_of(pv.node)?;
            for t in 0..horizon {
                p[t][j] -= base.kva_to_pu(self.pv_p[s][t]);
                q[t][j] -= base.kva_to_pu(self.pv_q[s][t]);
            }
        }
        Ok((p, q))
    }

    /// Energy-weighted real-power cost of the EV schedule at the given prices ($/MWh).
    pub fn ev_energy_cost(&self, lmp: &[f64]) -> f64 {
        self.ev_p
            .iter()
            .map(|row| row.iter().zip(lmp).map(|(p, l)| p * l / 1000.0).sum::<f64>())
            .sum()
    }
}

/// Fixed-power-factor PV output at availability.
fn pv_at_availability(fleet: &DerFleet, pv_factor: &[f64], sched: &mut DerSchedule) {
    for (s, pv) in fleet.pvs.iter().enumerate() {
        for (t, rho) in pv_factor.iter().enumerate() {
            sched.pv_p[s][t] = rho * pv.kva;
        }
    }
}

/// Fills `hours` in the given order at full rate until the requirement is met.
fn fill(ev: &Ev, hours: impl IntoIterator<Item = usize>, row: &mut [f64]) {
    let mut remaining = ev.energy_kwh;
    for t in hours {
        if remaining <= 0.0 {
            break;
        }
        let p = remaining.min(ev.max_rate_kw);
        row[t] = p;
        remaining -= p;
    }
}

/// Full-rate charging from plug-in at unity power factor; PV at availability.
pub fn bau_schedule(fleet: &DerFleet, pv_factor: &[f64]) -> Result<DerSchedule> {
    let horizon = pv_factor.len();
    let mut sched = DerSchedule::zeros(fleet, horizon);
    for (e, ev) in fleet.evs.iter().enumerate() {
        ev.validate(horizon)?;
        fill(ev, ev.window(horizon), &mut sched.ev_p[e]);
    }
    pv_at_availability(fleet, pv_factor, &mut sched);
    Ok(sched)
}

/// Cheapest-hours charging against the LMP at unity power factor; ties go to
/// the earlier hour of the window. PV at availability.
pub fn tou_schedule(fleet: &DerFleet, lmp: &[f64], pv_factor: &[f64]) -> Result<DerSchedule> {
    let horizon = lmp.len();
    if pv_factor.len() != horizon {
        return Err(Error::InvalidArgument("LMP and PV factor lengths differ".into()));
    }
    let mut sched = DerSchedule::zeros(fleet, horizon);
    for (e, ev) in fleet.evs.iter().enumerate() {
        ev.validate(horizon)?;
        let mut hours = ev.window(horizon);
        // stable sort keeps window order among equal prices
        hours.sort_by(|&a, &b| lmp[a].total_cmp(&lmp[b]));
        fill(ev, hours, &mut sched.ev_p[e]);
    }
    pv_at_availability(fleet, pv_factor, &mut sched);
    Ok(sched)
}

/// Independent feasibility check of a schedule against the device models.
pub fn check_schedule(fleet: &DerFleet, sched: &DerSchedule, pv_factor: &[f64], tol: f64) -> std::result::Result<(), String> {
    let horizon = pv_factor.len();
    for (e, ev) in fleet.evs.iter().enumerate() {
        let window = ev.window(horizon);
        let mut soc = ev.arrival_soc();
        let drain = ev.drain_hour(horizon);
        let mut delivered = 0.0;
        // walk one cycle starting at plug-in so the SoC trace is contiguous
        for k in 0..horizon {
            let t = (ev.plug_in - 1 + k) % horizon;
            let (p, q) = (sched.ev_p[e][t], sched.ev_q[e][t]);
            if !window.contains(&t) {
                if p.abs() > tol || q.abs() > tol {
                    return Err(format!("EV {e}: power outside the window at hour {}", t + 1));
                }
            } else {
                if p < -tol || p > ev.max_rate_kw + tol {
                    return Err(format!("EV {e}: rate {p} out of bounds at hour {}", t + 1));
                }
                if p.hypot(q) > ev.charger_kva + tol {
                    return Err(format!("EV {e}: charger capacity exceeded at hour {}", t + 1));
                }
            }
            soc += p;
            delivered += p;
            if t == drain {
                soc -= ev.energy_kwh;
            }
            if soc < -tol || soc > ev.capacity_kwh + tol {
                return Err(format!("EV {e}: state of charge {soc} out of bounds at hour {}", t + 1));
            }
        }
        if (delivered - ev.energy_kwh).abs() > tol {
            return Err(format!("EV {e}: delivered {delivered} kWh, required {}", ev.energy_kwh));
        }
    }
    for (s, pv) in fleet.pvs.iter().enumerate() {
        for t in 0..horizon {
            let (p, q) = (sched.pv_p[s][t], sched.pv_q[s][t]);
            if p < -tol || p > pv_factor[t] * pv.kva + tol {
                return Err(format!("PV {s}: output {p} exceeds availability at hour {}", t + 1));
            }
            if p.hypot(q) > pv.kva + tol {
                return Err(format!("PV {s}: inverter capacity exceeded at hour {}", t + 1));
            }
        }
    }
    Ok(())
}

/// Program variables of one EV. Power variables exist only inside the window.
#[derive(Debug, Clone)]
pub struct EvVars {
    pub p: Vec<Option<VarId>>,
    pub q: Vec<Option<VarId>>,
    /// State indices `0..=T`.
    pub soc: Vec<VarId>,
}

#[derive(Debug, Clone)]
pub struct PvVars {
    pub p: Vec<VarId>,
    pub q: Vec<VarId>,
}

#[derive(Debug, Clone, Default)]
pub struct DerVars {
    pub evs: Vec<EvVars>,
    pub pvs: Vec<PvVars>,
}

/// EV feasible set: rate bounds and charger cone in the window, SoC
/// recursion with trip drain, SoC bounds, full-at-departure and SoC periodicity.
pub fn emit_ev(prog: &mut ConvexProgram, index: usize, ev: &Ev, base: &PerUnitBase, horizon: usize) -> EvVars {
    let window = ev.window(horizon);
    let mut p = vec![None; horizon];
    let mut q = vec![None; horizon];
    for &t in &window {
        let pv = prog.add_var(VarTag::EvP { ev: index, hour: t });
        let qv = prog.add_var(VarTag::EvQ { ev: index, hour: t });
        prog.add_nonneg(pv);
        prog.add_le(
            RowTag::EvRate { ev: index, hour: t },
            vec![(pv, 1.0)],
            base.kva_to_pu(ev.max_rate_kw),
        );
        prog.add_soc(
            RowTag::EvCone { ev: index, hour: t },
            Affine::constant(base.kva_to_pu(ev.charger_kva)),
            vec![Affine::var(pv, 1.0), Affine::var(qv, 1.0)],
        );
        p[t] = Some(pv);
        q[t] = Some(qv);
    }
    let soc: Vec<VarId> = (0..=horizon)
        .map(|hour| prog.add_var(VarTag::EvSoc { ev: index, hour }))
        .collect();
    let drain = ev.drain_hour(horizon);
    for t in 0..horizon {
        let mut terms = vec![(soc[t + 1], 1.0), (soc[t], -1.0)];
        if let Some(pv) = p[t] {
            terms.push((pv, -1.0));
        }
        let rhs = if t == drain { -base.kva_to_pu(ev.energy_kwh) } else { 0.0 };
        prog.add_eq(RowTag::SocRecursion { ev: index, hour: t }, terms, rhs);
        prog.add_nonneg(soc[t + 1]);
        prog.add_le(
            RowTag::SocUpper { ev: index, hour: t },
            vec![(soc[t + 1], 1.0)],
            base.kva_to_pu(ev.capacity_kwh),
        );
    }
    // hour label h ends at state index h
    prog.add_eq(
        RowTag::EvDeparture { ev: index },
        vec![(soc[ev.departure], 1.0)],
        base.kva_to_pu(ev.arrival_soc() + ev.energy_kwh),
    );
    prog.add_eq(
        RowTag::EvPeriodicity { ev: index },
        vec![(soc[horizon], 1.0), (soc[0], -1.0)],
        0.0,
    );
    EvVars { p, q, soc }
}

/// PV feasible set: `0 <= p <= rho_t S` and `||(p, q)|| <= S`.
pub fn emit_pv(prog: &mut ConvexProgram, index: usize, pv: &Pv, base: &PerUnitBase, pv_factor: &[f64]) -> PvVars {
    let s = base.kva_to_pu(pv.kva);
    let mut vars = PvVars {
        p: Vec::with_capacity(pv_factor.len()),
        q: Vec::with_capacity(pv_factor.len()),
    };
    for (t, rho) in pv_factor.iter().enumerate() {
        let p = prog.add_var(VarTag::PvP { pv: index, hour: t });
        let q = prog.add_var(VarTag::PvQ { pv: index, hour: t });
        prog.add_nonneg(p);
        prog.add_le(RowTag::PvAvailable { pv: index, hour: t }, vec![(p, 1.0)], rho * s);
        prog.add_soc(
            RowTag::PvCone { pv: index, hour: t },
            Affine::constant(s),
            vec![Affine::var(p, 1.0), Affine::var(q, 1.0)],
        );
        vars.p.push(p);
        vars.q.push(q);
    }
    vars
}

/// Adds every device of the fleet to the program.
pub fn emit_der_block(prog: &mut ConvexProgram, fleet: &DerFleet, base: &PerUnitBase, pv_factor: &[f64]) -> DerVars {
    let horizon = pv_factor.len();
    DerVars {
        evs: fleet
            .evs
            .iter()
            .enumerate()
            .map(|(e, ev)| emit_ev(prog, e, ev, base, horizon))
            .collect(),
        pvs: fleet
            .pvs
            .iter()
            .enumerate()
            .map(|(s, pv)| emit_pv(prog, s, pv, base, pv_factor))
            .collect(),
    }
}

/// Reads a device schedule (kW / kVAr) back out of a solved program.
pub fn extract_schedule(vars: &DerVars, x: &[f64], base: &PerUnitBase, horizon: usize) -> DerSchedule {
    let kw = |v: Option<VarId>| v.map_or(0.0, |v| base.pu_to_kva(x[v.0]));
    DerSchedule {
        ev_p: vars.evs.iter().map(|e| (0..horizon).map(|t| kw(e.p[t])).collect()).collect(),
        ev_q: vars.evs.iter().map(|e| (0..horizon).map(|t| kw(e.q[t])).collect()).collect(),
        pv_p: vars.pvs.iter().map(|s| s.p.iter().map(|&v| kw(Some(v))).collect()).collect(),
        pv_q: vars.pvs.iter().map(|s| s.q.iter().map(|&v| kw(Some(v))).collect()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{SolveStatus, SolverSettings};
    use proptest::prelude::*;

    fn ev(plug_in: usize, departure: usize, energy: f64) -> Ev {
        Ev {
            node: NodeId(1),
            plug_in,
            departure,
            energy_kwh: energy,
            capacity_kwh: 24.0,
            max_rate_kw: 3.3,
            charger_kva: 6.6,
            arrival_soc_kwh: None,
        }
    }

    fn fleet(evs: Vec<Ev>) -> DerFleet {
        DerFleet { evs, pvs: vec![] }
    }

    #[test]
    fn bau_residential_remainder() {
        let f = fleet(vec![ev(19, 6, 18.0)]);
        let s = bau_schedule(&f, &[0.0; 24]).unwrap();
        // 18 = 5 * 3.3 + 1.5
        for h in 19..=23 {
            assert_eq!(s.ev_p[0][h - 1], 3.3);
        }
        assert!((s.ev_p[0][23] - (18.0 - 5.0 * 3.3)).abs() < 1e-12);
        assert!(s.ev_p[0][..18].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn bau_commercial_remainder() {
        let f = fleet(vec![ev(9, 17, 12.0)]);
        let s = bau_schedule(&f, &[0.0; 24]).unwrap();
        // 12 = 3 * 3.3 + 2.1
        assert_eq!(&s.ev_p[0][8..11], &[3.3, 3.3, 3.3]);
        assert!((s.ev_p[0][11] - (12.0 - 3.0 * 3.3)).abs() < 1e-12);
        assert!(s.ev_p[0][12..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn zero_requirement_gives_zero_schedule() {
        let f = fleet(vec![ev(9, 17, 0.0)]);
        let s = bau_schedule(&f, &[0.0; 24]).unwrap();
        assert!(s.ev_p[0].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn tou_matches_bau_on_increasing_prices() {
        let lmp: Vec<f64> = (0..24).map(|t| 20.0 + t as f64).collect();
        let f = fleet(vec![ev(10, 17, 12.0)]);
        assert_eq!(
            tou_schedule(&f, &lmp, &[0.0; 24]).unwrap(),
            bau_schedule(&f, &[0.0; 24]).unwrap()
        );
    }

    #[test]
    fn tou_moves_to_cheap_night_hours() {
        let mut lmp = vec![40.0; 24];
        for (h, p) in [
            (20, 48.0),
            (21, 44.0),
            (22, 38.0),
            (23, 28.0),
            (24, 27.0),
            (1, 28.0),
            (2, 26.0),
            (3, 25.0),
            (4, 25.5),
        ] {
            lmp[h - 1] = p;
        }
        let f = fleet(vec![ev(20, 7, 18.0)]);
        let s = tou_schedule(&f, &lmp, &[0.0; 24]).unwrap();
        let first = (0..12).map(|k| (19 + k) % 24).find(|&t| s.ev_p[0][t] > 0.0).unwrap();
        assert_eq!(first + 1, 23);
    }

    #[test]
    fn flat_prices_keep_bau_cost() {
        let f = fleet(vec![ev(20, 7, 18.0), ev(10, 17, 12.0)]);
        let lmp = vec![33.0; 24];
        let tou = tou_schedule(&f, &lmp, &[0.0; 24]).unwrap();
        let bau = bau_schedule(&f, &[0.0; 24]).unwrap();
        assert!((tou.ev_energy_cost(&lmp) - bau.ev_energy_cost(&lmp)).abs() < 1e-12);
    }

    #[test]
    fn infeasible_window_rejected() {
        let e = ev(10, 11, 12.0);
        assert!(matches!(e.validate(24), Err(Error::InfeasibleWindow(_))));
        assert!(bau_schedule(&fleet(vec![e]), &[0.0; 24]).is_err());
        let mut e = ev(10, 17, 12.0);
        e.max_rate_kw = 7.0;
        assert!(e.validate(24).is_err());
    }

    #[test]
    fn constraint_counts_for_twelve_hour_window() {
        let mut prog = ConvexProgram::new();
        emit_ev(&mut prog, 0, &ev(20, 7, 18.0), &PerUnitBase::default(), 24);
        assert_eq!(prog.count(|r| matches!(r, RowTag::EvCone { .. })), 12);
        assert_eq!(prog.count(|r| matches!(r, RowTag::SocRecursion { .. })), 24);
        assert_eq!(prog.count(|r| matches!(r, RowTag::EvDeparture { .. })), 1);
        assert_eq!(prog.count(|r| matches!(r, RowTag::EvPeriodicity { .. })), 1);
        assert!(prog.var(VarTag::EvP { ev: 0, hour: 10 }).is_none());
    }

    fn solve_device(prices_p: &[f64], prices_q: &[f64], f: &DerFleet, pv_factor: &[f64]) -> DerSchedule {
        let base = PerUnitBase::default();
        let mut prog = ConvexProgram::new();
        let vars = emit_der_block(&mut prog, f, &base, pv_factor);
        for e in &vars.evs {
            for t in 0..pv_factor.len() {
                if let (Some(p), Some(q)) = (e.p[t], e.q[t]) {
                    prog.add_cost(p, prices_p[t]);
                    prog.add_cost(q, prices_q[t]);
                }
            }
        }
        for s in &vars.pvs {
            for t in 0..pv_factor.len() {
                prog.add_cost(s.p[t], -prices_p[t]);
                prog.add_cost(s.q[t], -prices_q[t]);
            }
        }
        let sol = prog.solve(&SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        extract_schedule(&vars, &sol.x, &base, pv_factor.len())
    }

    #[test]
    fn pv_at_night_has_no_real_power() {
        let f = DerFleet {
            evs: vec![],
            pvs: vec![Pv {
                node: NodeId(1),
                kva: 10.0,
            }],
        };
        let s = solve_device(&[30.0; 2], &[-5.0, 5.0], &f, &[0.0, 0.0]);
        assert!(s.pv_p[0][0].abs() < 1e-6);
        assert!((s.pv_q[0][0] + 10.0).abs() < 1e-5 && (s.pv_q[0][1] - 10.0).abs() < 1e-5);
    }

    #[test]
    fn optimized_schedule_passes_independent_check() {
        let f = DerFleet {
            evs: vec![ev(20, 7, 18.0), ev(10, 17, 12.0)],
            pvs: vec![Pv {
                node: NodeId(1),
                kva: 10.0,
            }],
        };
        let lmp: Vec<f64> = (0..24).map(|t| 30.0 + 10.0 * ((t as f64) * 0.4).sin()).collect();
        let pv: Vec<f64> = (0..24).map(|t| if (7..18).contains(&t) { 0.8 } else { 0.0 }).collect();
        let s = solve_device(&lmp, &[1.0; 24], &f, &pv);
        check_schedule(&f, &s, &pv, 1e-5).unwrap();
        // reactive provision is rewarded
        assert!(s.ev_q[0].iter().zip(&s.ev_p[0]).any(|(q, _)| *q < -1.0));
    }

    proptest! {
        #[test]
        fn schedulers_conserve_energy_and_tou_is_cheaper(
            plug in 1usize..=24, len in 4usize..=12, energy in 0.0f64..13.0,
            lmp in prop::collection::vec(10.0f64..60.0, 24)
        ) {
            let departure = (plug - 1 + len - 1) % 24 + 1;
            let f = fleet(vec![ev(plug, departure, energy)]);
            let pv = vec![0.5; 24];
            let bau = bau_schedule(&f, &pv).unwrap();
            let tou = tou_schedule(&f, &lmp, &pv).unwrap();
            for s in [&bau, &tou] {
                prop_assert!((s.ev_p[0].iter().sum::<f64>() - energy).abs() < 1e-9);
                prop_assert!(check_schedule(&f, s, &pv, 1e-9).is_ok());
            }
            prop_assert!(tou.ev_energy_cost(&lmp) <= bau.ev_energy_cost(&lmp) + 1e-12);
        }
    }
}
