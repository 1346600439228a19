//! Scenario cases: a feeder, its exogenous trajectories, a DER fleet and a scheduling option.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::der::DerFleet;
use crate::error::{Error, Result};
use crate::feeder::Feeder;
use crate::trajectories::ExogenousTrajectories;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchedulingOption {
    /// Full-rate charging on arrival, unity power factor.
    Bau,
    /// LMP-minimizing charging, unity power factor.
    Tou,
    /// Real and reactive cost minimization without degradation cost.
    PqOpt,
    /// Co-optimization including transformer degradation cost.
    FullOpt,
}

impl SchedulingOption {
    pub const ALL: [SchedulingOption; 4] = [Self::Bau, Self::Tou, Self::PqOpt, Self::FullOpt];

    pub fn label(self) -> &'static str {
        match self {
            Self::Bau => "BaU",
            Self::Tou => "ToU",
            Self::PqOpt => "PQ-opt",
            Self::FullOpt => "Full-opt",
        }
    }

    /// Short lowercase name used in file names and CLI arguments.
    pub fn slug(self) -> &'static str {
        match self {
            Self::Bau => "bau",
            Self::Tou => "tou",
            Self::PqOpt => "pq",
            Self::FullOpt => "full",
        }
    }
}

impl fmt::Display for SchedulingOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SchedulingOption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "bau" => Ok(Self::Bau),
            "tou" => Ok(Self::Tou),
            "pq" | "pq-opt" | "pqopt" => Ok(Self::PqOpt),
            "full" | "full-opt" | "fullopt" => Ok(Self::FullOpt),
            _ => Err(Error::UnknownOption(s.to_string())),
        }
    }
}

/// EV count and PV capacity used to label a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penetration {
    pub evs: usize,
    pub pv_kva: f64,
}

impl Penetration {
    pub fn is_base(&self) -> bool {
        self.evs == 0 && self.pv_kva == 0.0
    }
}

impl fmt::Display for Penetration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EV{}/PV{}", self.evs, self.pv_kva)
    }
}

/// Immutable bundle of all inputs of one run.
#[derive(Debug, Clone)]
pub struct ScenarioCase {
    pub feeder: Arc<Feeder>,
    pub trajectories: Arc<ExogenousTrajectories>,
    pub fleet: DerFleet,
    pub option: SchedulingOption,
    pub penetration: Penetration,
}

impl ScenarioCase {
    pub fn new(
        feeder: Arc<Feeder>,
        trajectories: Arc<ExogenousTrajectories>,
        fleet: DerFleet,
        option: SchedulingOption,
    ) -> Result<Self> {
        trajectories.validate(&feeder)?;
        fleet.validate(&feeder, trajectories.horizon)?;
        let penetration = Penetration {
            evs: fleet.evs.len(),
            pv_kva: fleet.total_pv_kva(),
        };
        Ok(Self {
            feeder,
            trajectories,
            fleet,
            option,
            penetration,
        })
    }

    /// Overrides the reported penetration (e.g. per-site grid values).
    pub fn with_penetration(mut self, penetration: Penetration) -> Self {
        self.penetration = penetration;
        self
    }

    pub fn with_option(mut self, option: SchedulingOption) -> Self {
        self.option = option;
        self
    }

    pub fn horizon(&self) -> usize {
        self.trajectories.horizon
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.penetration, self.option)
    }

    pub fn is_base_case(&self) -> bool {
        self.fleet.is_empty()
    }
}

/// Builds a scenario from a textual option tag (`bau`, `tou`, `pq`, `full`).
pub fn build_scenario(
    feeder: Arc<Feeder>,
    trajectories: Arc<ExogenousTrajectories>,
    fleet: DerFleet,
    option: &str,
) -> Result<ScenarioCase> {
    ScenarioCase::new(feeder, trajectories, fleet, option.parse()?)
}
