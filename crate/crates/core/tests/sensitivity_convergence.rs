use std::sync::Arc;

use dlmc_core::der::DerSchedule;
use dlmc_core::opf::{price_fixed_schedule, OpfOptions};
use dlmc_core::reference::{self, COMMERCIAL_NODE, RESIDENTIAL_NODE};
use dlmc_core::scenario::{ScenarioCase, SchedulingOption};
use dlmc_core::sensitivity::{finite_difference_check, Perturbation};

#[test]
fn central_difference_error_falls_quadratically_with_step() {
    let f = Arc::new(reference::feeder());
    let t = Arc::new(reference::trajectories(&f));
    let fleet = Default::default();
    let case = ScenarioCase::new(f.clone(), t, fleet, SchedulingOption::Bau).unwrap();
    let sol = price_fixed_schedule(&case, &DerSchedule::zeros(&case.fleet, 24), &OpfOptions::default()).unwrap();
    for node in [COMMERCIAL_NODE, RESIDENTIAL_NODE] {
        let j = f.index_of(node).unwrap();
        for kind in [Perturbation::Real, Perturbation::Reactive] {
            for hour in [4, 18] {
                let coarse = finite_difference_check(&f, &sol, hour, j, kind, 2e-2).unwrap().max_error();
                let fine = finite_difference_check(&f, &sol, hour, j, kind, 1e-2).unwrap().max_error();
                let ratio = coarse / fine;
                assert!(
                    (3.0..5.0).contains(&ratio),
                    "node {node} {kind:?} hour {hour}: {coarse:e} / {fine:e} = {ratio}"
                );
            }
        }
    }
}

#[test]
fn the_root_cannot_be_perturbed() {
    let f = Arc::new(reference::feeder());
    let t = Arc::new(reference::trajectories(&f));
    let case = ScenarioCase::new(f.clone(), t, Default::default(), SchedulingOption::Bau).unwrap();
    let sol = price_fixed_schedule(&case, &DerSchedule::zeros(&case.fleet, 24), &OpfOptions::default()).unwrap();
    assert!(finite_difference_check(&f, &sol, 0, 0, Perturbation::Real, 1e-3).is_err());
    assert!(finite_difference_check(&f, &sol, 0, 1, Perturbation::Real, 0.0).is_err());
}
