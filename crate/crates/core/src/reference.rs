//! The shipped synthetic reference feeder, its hourly data and EV/PV template.
//!
//! The feeder is a 13.8 kV trunk of 30 nodes with ten 7-node laterals and two
//! monitored 30 kVA service transformers at the ends of distant laterals:
//! `T-COM` feeding commercial node 901 and `T-RES` feeding residential node 902.

use crate::der::{Ev, FleetTemplate, SiteTemplate};
use crate::feeder::{parse_feeder, Feeder, NodeId};
use crate::trajectories::{read_trajectories, ExogenousTrajectories, DEFAULT_REACTIVE_PRICE_FRACTION};

pub const FEEDER_JSON: &str = include_str!("../data/reference_feeder.json");
pub const TRAJECTORIES_CSV: &str = include_str!("../data/reference_trajectories.csv");

pub const COMMERCIAL_NODE: NodeId = NodeId(901);
pub const RESIDENTIAL_NODE: NodeId = NodeId(902);

pub fn feeder() -> Feeder {
    parse_feeder(FEEDER_JSON).expect("shipped reference feeder is valid")
}

pub fn trajectories(feeder: &Feeder) -> ExogenousTrajectories {
    read_trajectories(TRAJECTORIES_CSV.as_bytes(), feeder, DEFAULT_REACTIVE_PRICE_FRACTION)
        .expect("shipped reference trajectories are valid")
}

/// 24 kWh batteries, 3.3 kW / 6.6 kVA chargers, 10 kVA PV units. Commercial
/// EVs are plugged in 9am-5pm (hours 10-17) and need 12 kWh; residential EVs
/// 7pm-7am (hours 20-7) and need 18 kWh. Both leave fully charged.
pub fn fleet_template() -> FleetTemplate {
    let ev = |node, plug_in, departure, energy_kwh| Ev {
        node,
        plug_in,
        departure,
        energy_kwh,
        capacity_kwh: 24.0,
        max_rate_kw: 3.3,
        charger_kva: 6.6,
        arrival_soc_kwh: None,
    };
    FleetTemplate {
        sites: vec![
            SiteTemplate {
                ev: ev(COMMERCIAL_NODE, 10, 17, 12.0),
                pv_unit_kva: 10.0,
            },
            SiteTemplate {
                ev: ev(RESIDENTIAL_NODE, 20, 7, 18.0),
                pv_unit_kva: 10.0,
            },
        ],
    }
}
