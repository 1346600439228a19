//! Fixtures shared by the engine benchmarks.

use std::sync::Arc;

use dlmc_core::der::{bau_schedule, DerSchedule};
use dlmc_core::opf::{price_fixed_schedule, solve_full_opt};
use dlmc_core::{reference, OpfOptions, OpfSolution, ScenarioCase, SchedulingOption};

/// Reference feeder case with `evs` EVs and `pv_kva` of PV per site.
pub fn reference_case(evs: usize, pv_kva: f64, option: SchedulingOption) -> ScenarioCase {
    let feeder = Arc::new(reference::feeder());
    let traj = Arc::new(reference::trajectories(&feeder));
    let fleet = reference::fleet_template().instantiate(evs, pv_kva);
    ScenarioCase::new(feeder, traj, fleet, option).expect("reference case is valid")
}

/// Solved case: fixed schedules are priced, Full-opt is co-optimized.
pub fn solved(case: &ScenarioCase) -> OpfSolution {
    let opts = OpfOptions::default();
    let t = &case.trajectories;
    match case.option {
        SchedulingOption::FullOpt => solve_full_opt(case, &opts),
        _ if case.fleet.is_empty() => price_fixed_schedule(case, &DerSchedule::zeros(&case.fleet, t.horizon), &opts),
        _ => price_fixed_schedule(case, &bau_schedule(&case.fleet, &t.pv_factor).expect("BaU schedule"), &opts),
    }
    .expect("reference case solves")
}
