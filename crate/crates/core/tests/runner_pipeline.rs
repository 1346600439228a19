use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use dlmc_core::der::bau_schedule;
use dlmc_core::dlmc::export_price_signals;
use dlmc_core::feeder::{Feeder, NodeId};
use dlmc_core::reference::{self, COMMERCIAL_NODE};
use dlmc_core::runner::{
    emit_cost_lol_table, emit_decomposition_series, emit_dlmc_series, load_result_set, rerun_cell, run_matrix, write_result_set,
    MatrixConfig, ResultSet,
};
use dlmc_core::scenario::{ScenarioCase, SchedulingOption};
use dlmc_core::selfsched::{verify_against, verify_fixed_point};
use dlmc_core::trajectories::ExogenousTrajectories;

struct Fixture {
    feeder: Arc<Feeder>,
    traj: Arc<ExogenousTrajectories>,
    config: MatrixConfig,
    results: ResultSet,
}

fn config() -> MatrixConfig {
    MatrixConfig {
        evs: vec![0, 3],
        pv_kva: vec![0.0, 30.0],
        options: vec![SchedulingOption::Bau, SchedulingOption::FullOpt],
        jobs: 2,
        ..MatrixConfig::default()
    }
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let feeder = Arc::new(reference::feeder());
        let traj = Arc::new(reference::trajectories(&feeder));
        let config = config();
        let results = run_matrix(feeder.clone(), traj.clone(), &reference::fleet_template(), &config).unwrap();
        Fixture {
            feeder,
            traj,
            config,
            results,
        }
    })
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            for (k, v) in csv_files(&path) {
                out.insert(format!("{}/{k}", path.file_name().unwrap().to_string_lossy()), v);
            }
        } else if path.extension().is_some_and(|e| e == "csv") {
            out.insert(
                path.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&path).unwrap(),
            );
        }
    }
    out
}

#[test]
fn every_cell_of_the_grid_succeeds_in_order() {
    let r = &fixture().results;
    assert_eq!(r.cells.len(), 8);
    assert_eq!(
        r.failed(),
        0,
        "{:?}",
        r.cells.iter().map(|c| c.error_messages()).collect::<Vec<_>>()
    );
    let slugs: Vec<String> = r.cells.iter().map(|c| c.key.slug()).collect();
    assert_eq!(slugs.first().unwrap(), "ev0_pv0_bau");
    assert_eq!(slugs.last().unwrap(), "ev3_pv30_full");
}

#[test]
fn base_row_of_the_cost_table_has_zero_deltas() {
    let rows = emit_cost_lol_table(&fixture().results).unwrap();
    for row in rows.iter().filter(|r| r.key.is_base()) {
        assert_eq!([row.d_real, row.d_reactive, row.d_transformer, row.d_total], [0.0; 4]);
    }
    for row in &rows {
        assert!((row.real + row.reactive + row.transformer - row.total).abs() < 1e-9);
    }
}

#[test]
fn cost_table_needs_the_base_case() {
    let mut r = fixture().results.clone();
    r.base.outcome = Err("solver failed".into());
    let err = emit_cost_lol_table(&r).unwrap_err();
    assert!(err.to_string().contains("missing base case"));
}

#[test]
fn persisted_results_load_back_unchanged() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    write_result_set(dir.path(), &fx.feeder, &fx.traj, &fx.config, &fx.results).unwrap();
    let (feeder, loaded) = load_result_set(dir.path()).unwrap();
    assert_eq!(feeder.node_count(), fx.feeder.node_count());
    assert_eq!(
        emit_cost_lol_table(&loaded).unwrap(),
        emit_cost_lol_table(&fx.results).unwrap()
    );
    let mut a = Vec::new();
    let mut b = Vec::new();
    emit_dlmc_series(
        &fx.results,
        &fx.feeder,
        COMMERCIAL_NODE,
        SchedulingOption::FullOpt,
        true,
        &mut a,
    )
    .unwrap();
    emit_dlmc_series(&loaded, &feeder, COMMERCIAL_NODE, SchedulingOption::FullOpt, true, &mut b).unwrap();
    assert_eq!(a, b);
    for cell in ["base", "ev3_pv30_full"] {
        for file in [
            "feeder.json",
            "cell.json",
            "result.json",
            "schedule.csv",
            "prices.csv",
            "dlmc.csv",
            "decomposition.csv",
        ] {
            assert!(dir.path().join(cell).join(file).is_file(), "{cell}/{file}");
        }
    }
    assert!(dir.path().join("ev3_pv30_full/verification.txt").is_file());
}

#[test]
fn reruns_write_byte_identical_tables() {
    let fx = fixture();
    let again = run_matrix(fx.feeder.clone(), fx.traj.clone(), &reference::fleet_template(), &fx.config).unwrap();
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_result_set(d1.path(), &fx.feeder, &fx.traj, &fx.config, &fx.results).unwrap();
    write_result_set(d2.path(), &fx.feeder, &fx.traj, &fx.config, &again).unwrap();
    let (a, b) = (csv_files(d1.path()), csv_files(d2.path()));
    assert!(a.len() > 40);
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (name, bytes) in &a {
        assert!(bytes == &b[name], "{name} differs between runs");
    }
}

#[test]
fn dlmc_series_rejects_missing_cells_and_nodes_without_transformers() {
    let fx = fixture();
    let mut sink = Vec::new();
    assert!(emit_dlmc_series(
        &fx.results,
        &fx.feeder,
        COMMERCIAL_NODE,
        SchedulingOption::Tou,
        false,
        &mut sink
    )
    .is_err());
    assert!(emit_dlmc_series(&fx.results, &fx.feeder, NodeId(5), SchedulingOption::Bau, true, &mut sink).is_err());
    assert!(emit_dlmc_series(&fx.results, &fx.feeder, NodeId(4242), SchedulingOption::Bau, false, &mut sink).is_err());
    let mut ok = Vec::new();
    emit_dlmc_series(&fx.results, &fx.feeder, NodeId(5), SchedulingOption::Bau, false, &mut ok).unwrap();
    let text = String::from_utf8(ok).unwrap();
    // header plus 4 cells x 24 hours x 2 sides
    assert_eq!(text.lines().count(), 1 + 4 * 48);
}

#[test]
fn self_scheduling_is_vacuous_without_devices_and_exact_when_co_optimized() {
    let fx = fixture();
    let base = fx.results.base.output().unwrap();
    let case = ScenarioCase::new(
        fx.feeder.clone(),
        fx.traj.clone(),
        base.fleet.clone(),
        SchedulingOption::FullOpt,
    )
    .unwrap();
    let report = verify_fixed_point(&base.solution, &case, &Default::default()).unwrap();
    assert!(report.devices.is_empty() && report.passed());

    let full = fx.results.get(3, 30.0, SchedulingOption::FullOpt).unwrap().output().unwrap();
    let v = full.verification.as_ref().unwrap();
    assert_eq!(v.devices.len(), 3 * 2 + 3 * 2);
    assert!(v.passed(), "{v}");
}

#[test]
fn uncoordinated_charging_is_not_a_self_schedule() {
    let fx = fixture();
    let cell = fx.results.get(3, 0.0, SchedulingOption::Bau).unwrap().output().unwrap();
    let case = ScenarioCase::new(fx.feeder.clone(), fx.traj.clone(), cell.fleet.clone(), SchedulingOption::Bau).unwrap();
    let prices = export_price_signals(&fx.feeder, &cell.solution);
    let bau = bau_schedule(&cell.fleet, &fx.traj.pv_factor).unwrap();
    let report = verify_against(&case, &prices, &bau, &Default::default(), 1e-6).unwrap();
    assert!(!report.passed());
    for d in &report.devices {
        assert!(d.self_scheduled <= d.imputed + 1e-9, "{d:?}");
    }
    assert!(report.devices.iter().any(|d| d.schedule_deviation > 0.1));
}

#[test]
fn a_persisted_cell_reruns_from_its_own_inputs() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    write_result_set(dir.path(), &fx.feeder, &fx.traj, &fx.config, &fx.results).unwrap();
    let cell = dir.path().join("ev3_pv30_full");
    let again = dir.path().join("rerun");
    let result = rerun_cell(&cell, &again).unwrap();
    assert!(result.is_ok());
    let (a, b) = (csv_files(&cell), csv_files(&again));
    assert_eq!(a.len(), 6);
    assert_eq!(a, b);
}

#[test]
fn decomposition_series_lists_every_hour_and_side_per_cell() {
    let fx = fixture();
    let mut buf = Vec::new();
    emit_decomposition_series(&fx.results, &fx.feeder, COMMERCIAL_NODE, SchedulingOption::FullOpt, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("evs,pv_kva,option,node,hour,side,transformer,"));
    assert_eq!(text.lines().count(), 1 + 4 * 48);
    assert!(emit_decomposition_series(&fx.results, &fx.feeder, NodeId(5), SchedulingOption::FullOpt, Vec::new()).is_err());
}
