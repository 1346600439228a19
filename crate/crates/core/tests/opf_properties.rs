mod common;

use std::sync::Arc;

use common::*;
use dlmc_core::der::DerSchedule;
use dlmc_core::feeder::Feeder;
use dlmc_core::opf::{build_full_opt, price_fixed_schedule, solve_full_opt, solve_pq_opt, OpfOptions, OpfSolution};
use dlmc_core::reference;
use dlmc_core::scenario::{ScenarioCase, SchedulingOption};
use dlmc_core::sensitivity::hour_sensitivities;

fn assert_exact(sol: &OpfSolution) {
    assert!(sol.is_exact(1e-6), "relaxation not tight: {:?}", sol.exactness);
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-9)
}

fn scaled(case: &ScenarioCase, k: f64) -> ScenarioCase {
    let mut file = case.feeder.to_file();
    for t in &mut file.transformers {
        t.thermal.cost_per_hour *= k;
    }
    let feeder = Feeder::from_file(file).unwrap();
    let mut traj = (*case.trajectories).clone();
    traj.lmp.iter_mut().for_each(|x| *x *= k);
    traj.q_price.iter_mut().for_each(|x| *x *= k);
    ScenarioCase::new(Arc::new(feeder), Arc::new(traj), case.fleet.clone(), case.option).unwrap()
}

#[test]
fn scaling_all_prices_scales_duals_and_keeps_the_dispatch() {
    let opts = OpfOptions::default();
    let case = small_case(2, 0.0, SchedulingOption::FullOpt);
    let k = 3.0;
    let a = solve_full_opt(&case, &opts).unwrap();
    let b = solve_full_opt(&scaled(&case, k), &opts).unwrap();
    assert_exact(&a);
    assert_exact(&b);

    assert!(rel(b.objective, k * a.objective) < 1e-6);
    assert!(max_abs_diff(&a.p, &b.p) < 1e-6 * max_abs(&a.p).max(1.0));
    assert!(max_abs_diff(&a.l, &b.l) < 1e-6);
    assert!(max_abs_diff(&a.schedule.ev_p, &b.schedule.ev_p) < 1e-3);

    let scaled_lp: Vec<Vec<f64>> = a.lambda_p.iter().map(|r| r.iter().map(|x| k * x).collect()).collect();
    let scaled_lq: Vec<Vec<f64>> = a.lambda_q.iter().map(|r| r.iter().map(|x| k * x).collect()).collect();
    assert!(max_abs_diff(&scaled_lp, &b.lambda_p) < 1e-4 * max_abs(&scaled_lp));
    assert!(max_abs_diff(&scaled_lq, &b.lambda_q) < 1e-4 * max_abs(&scaled_lp));

    let f = &case.feeder;
    for t in [3, 12, 20] {
        let sa = hour_sensitivities(f, &a, t, 1e-6).unwrap();
        let sb = hour_sensitivities(f, &b, t, 1e-6).unwrap();
        for (x, y) in sa.real.iter().zip(&sb.real) {
            for (u, w) in x.dl.iter().zip(&y.dl) {
                assert!((u - w).abs() < 1e-4 * u.abs().max(1e-3), "hour {t}: {u} vs {w}");
            }
        }
    }
}

#[test]
fn without_degradation_cost_full_opt_equals_pq_opt() {
    let opts = OpfOptions::default();
    let f = small_feeder(0.002, 0.004, 0.0);
    let t = small_trajectories(&f);
    let case = case(f, t, fleet(3, 10.0), SchedulingOption::FullOpt);
    let full = solve_full_opt(&case, &opts).unwrap();
    let pq = solve_pq_opt(&case, &opts).unwrap();
    assert!(
        rel(full.objective, pq.objective) < 1e-6,
        "{} vs {}",
        full.objective,
        pq.objective
    );
    assert!(full.cost.transformer.abs() < 1e-9);
}

#[test]
fn pricing_full_opt_dispatch_reproduces_its_objective_and_prices() {
    let opts = OpfOptions::default();
    let case = small_case(3, 10.0, SchedulingOption::FullOpt);
    let full = solve_full_opt(&case, &opts).unwrap();
    let pinned = price_fixed_schedule(&case, &full.schedule, &opts).unwrap();
    assert!(
        rel(full.objective, pinned.objective) < 1e-6,
        "{} vs {}",
        full.objective,
        pinned.objective
    );
    assert!(max_abs_diff(&full.lambda_p, &pinned.lambda_p) < 1e-3 * max_abs(&full.lambda_p));
}

#[test]
fn empty_schedule_prices_like_the_device_free_case() {
    let opts = OpfOptions::default();
    let base = small_case(0, 0.0, SchedulingOption::FullOpt);
    let full = solve_full_opt(&base, &opts).unwrap();
    let pinned = price_fixed_schedule(&base, &DerSchedule::zeros(&base.fleet, 24), &opts).unwrap();
    assert!(rel(full.objective, pinned.objective) < 1e-7);
    assert!(max_abs_diff(&full.lambda_p, &pinned.lambda_p) < 1e-6 * max_abs(&full.lambda_p));
}

#[test]
fn duals_have_kkt_signs_and_root_prices_anchor_to_the_tariff() {
    let opts = OpfOptions::protection();
    let case = small_case(4, 20.0, SchedulingOption::FullOpt);
    let sol = solve_full_opt(&case, &opts).unwrap();
    assert_exact(&sol);
    let floor = -1e-9 * max_abs(&sol.lambda_p).max(1.0);
    for x in sol.mu_upper.iter().chain(&sol.mu_lower).chain(&sol.nu).flatten() {
        assert!(*x >= floor, "negative bound dual {x}");
    }
    for x in sol.xi.iter().flatten().flatten() {
        assert!(*x >= floor, "negative aging dual {x}");
    }
    let traj = &case.trajectories;
    for t in 0..24 {
        assert!((sol.lambda_p[t][0] - traj.lmp[t]).abs() < 1e-6 * traj.lmp[t]);
        let q0 = sol.q[t][0];
        let qp = traj.q_price[t];
        assert!(sol.lambda_q[t][0].abs() <= qp * (1.0 + 1e-6));
        if q0 > 1e-6 {
            assert!((sol.lambda_q[t][0] - qp).abs() < 1e-6 * qp.max(1.0));
        } else if q0 < -1e-6 {
            assert!((sol.lambda_q[t][0] + qp).abs() < 1e-6 * qp.max(1.0));
        }
    }
    assert!(sol.duality_gap <= 1e-6 * sol.objective.abs().max(1.0));
}

#[test]
fn adding_an_ev_never_lowers_the_co_optimized_cost() {
    let opts = OpfOptions::default();
    let costs: Vec<f64> = (0..5)
        .map(|n| {
            solve_full_opt(&small_case(n, 0.0, SchedulingOption::FullOpt), &opts)
                .unwrap()
                .objective
        })
        .collect();
    for w in costs.windows(2) {
        assert!(w[1] >= w[0] - 1e-7 * w[0].abs(), "{costs:?}");
    }
}

#[test]
fn co_optimization_beats_uncoordinated_charging() {
    let opts = OpfOptions::default();
    let f = Arc::new(reference::feeder());
    let t = Arc::new(reference::trajectories(&f));
    let fleet = reference::fleet_template().instantiate(3, 0.0);
    let case = ScenarioCase::new(f, t.clone(), fleet.clone(), SchedulingOption::FullOpt).unwrap();
    let full = solve_full_opt(&case, &opts).unwrap();
    let bau = price_fixed_schedule(&case, &dlmc_core::der::bau_schedule(&fleet, &t.pv_factor).unwrap(), &opts).unwrap();
    assert_exact(&full);
    assert_exact(&bau);
    assert!(full.objective < bau.objective, "{} vs {}", full.objective, bau.objective);
}

#[test]
fn pv_heavy_reactive_dispatch_uses_the_inverter_rating() {
    let opts = OpfOptions::default();
    let f = Arc::new(reference::feeder());
    let t = Arc::new(reference::trajectories(&f));
    let fleet = reference::fleet_template().instantiate(0, 60.0);
    let case = ScenarioCase::new(f, t.clone(), fleet.clone(), SchedulingOption::PqOpt).unwrap();
    let sol = solve_pq_opt(&case, &opts).unwrap();
    assert_exact(&sol);
    let mut binding = 0;
    for (s, pv) in fleet.pvs.iter().enumerate() {
        for h in 0..24 {
            let (p, q) = (sol.schedule.pv_p[s][h], sol.schedule.pv_q[s][h]);
            assert!(p <= t.pv_factor[h] * pv.kva + 1e-6);
            let apparent = p.hypot(q);
            assert!(apparent <= pv.kva * (1.0 + 1e-6));
            if apparent >= pv.kva * (1.0 - 1e-4) && p < pv.kva * (1.0 - 1e-3) {
                binding += 1;
            }
        }
    }
    assert!(binding > 0, "no hour supplies reactive power up to the rating");
}

#[test]
fn program_exports_as_conic_benchmark_format() {
    let case = small_case(1, 10.0, SchedulingOption::FullOpt);
    let model = build_full_opt(&case, &OpfOptions::default()).unwrap();
    let mut buf = Vec::new();
    model.program.write_cbf(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    for section in ["VER\n3", "OBJSENSE\nMIN", "VAR\n", "CON\n", "OBJACOORD\n"] {
        assert!(text.contains(section), "missing {section:?}");
    }
}
