#![allow(dead_code)]

use std::sync::Arc;

use dlmc_core::der::{DerFleet, Ev, Pv};
use dlmc_core::feeder::{parse_feeder, Feeder, NodeId};
use dlmc_core::scenario::{ScenarioCase, SchedulingOption};
use dlmc_core::trajectories::ExogenousTrajectories;

pub const SERVICE_NODE: NodeId = NodeId(2);

/// Root, one primary line, one 30 kVA service transformer line into node 2.
pub fn small_feeder(r: f64, x: f64, cost_per_hour: f64) -> Feeder {
    parse_feeder(&format!(
        r#"{{"base": {{"power_kva": 1000, "voltage_kv": 13.8, "root_voltage_pu": 1.0}},
            "nodes": [{{"id": 0}}, {{"id": 1}}, {{"id": 2}}],
            "lines": [{{"from": 0, "to": 1, "r_pu": {r}, "x_pu": {x}}},
                      {{"from": 1, "to": 2, "r_pu": {r2}, "x_pu": {x2}}}],
            "transformers": [{{"id": "T", "line": 2, "kva": 30,
                "thermal": {{"loss_ratio": 5, "top_oil_rise_c": 55, "hot_spot_rise_c": 25,
                             "decay": 0.75, "cost_per_hour": {cost_per_hour}}}}}]}}"#,
        r2 = 4.0 * r,
        x2 = 4.0 * x,
    ))
    .expect("valid small feeder")
}

pub fn lmp_day() -> Vec<f64> {
    (0..24)
        .map(|t| 30.0 + 15.0 * (std::f64::consts::PI * (t as f64 - 6.0) / 12.0).sin().max(0.0) + 0.1 * t as f64)
        .collect()
}

pub fn pv_day() -> Vec<f64> {
    (0..24)
        .map(|t| (std::f64::consts::PI * (t as f64 - 6.0) / 12.0).sin().max(0.0))
        .collect()
}

/// Hourly service load in pu; the evening peak loads the transformer near rating.
pub fn service_load() -> (Vec<f64>, Vec<f64>) {
    let p: Vec<f64> = (0..24).map(|t| if (17..22).contains(&t) { 0.026 } else { 0.012 }).collect();
    let q = p.iter().map(|p| 0.3 * p).collect();
    (p, q)
}

pub fn small_trajectories(feeder: &Feeder) -> ExogenousTrajectories {
    let (p, q) = service_load();
    let node = feeder.index_of(SERVICE_NODE).unwrap();
    ExogenousTrajectories::unloaded(feeder, lmp_day(), vec![28.0; 24], pv_day())
        .unwrap()
        .with_load(node, &p, &q)
        .unwrap()
}

pub fn ev(plug_in: usize, departure: usize, energy_kwh: f64) -> Ev {
    Ev {
        node: SERVICE_NODE,
        plug_in,
        departure,
        energy_kwh,
        capacity_kwh: 24.0,
        max_rate_kw: 3.3,
        charger_kva: 6.6,
        arrival_soc_kwh: None,
    }
}

pub fn fleet(evs: usize, pv_kva: f64) -> DerFleet {
    DerFleet {
        evs: (0..evs).map(|_| ev(19, 7, 12.0)).collect(),
        pvs: if pv_kva > 0.0 {
            vec![Pv {
                node: SERVICE_NODE,
                kva: pv_kva,
            }]
        } else {
            Vec::new()
        },
    }
}

pub fn case(feeder: Feeder, traj: ExogenousTrajectories, fleet: DerFleet, option: SchedulingOption) -> ScenarioCase {
    ScenarioCase::new(Arc::new(feeder), Arc::new(traj), fleet, option).expect("valid scenario")
}

pub fn small_case(evs: usize, pv_kva: f64, option: SchedulingOption) -> ScenarioCase {
    let f = small_feeder(0.002, 0.004, 0.03);
    let t = small_trajectories(&f);
    case(f, t, fleet(evs, pv_kva), option)
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &[Vec<f64>]) -> f64 {
    a.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max)
}
