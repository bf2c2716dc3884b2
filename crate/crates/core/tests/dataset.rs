//! End-to-end checks of the bundled `manhattan12` dataset: the case must
//! load cleanly, solve tightly, sit still when nothing happens, and respond
//! to the study scenarios with the documented frequency excursions.

use std::path::{Path, PathBuf};

use gridsim::attack::{load_fleet, load_scenario, run_scenario, BusSelection, OperatorSelection};
use gridsim::dynamics::{simulate_transient, SimulationConfig, StandingLoad};
use gridsim::grid::load_grid_case;
use gridsim::powerflow::{apply_ev_load, base_injections, solve_power_flow, SolverOptions};
use gridsim::protection::RelayKind;

fn dataset_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../datasets/manhattan12")
}

#[test]
fn bundled_case_loads_and_validates() {
    let case = load_grid_case(dataset_dir().join("grid.dat")).unwrap();
    case.validate().unwrap();
    assert_eq!(case.buses.len(), 12);
    assert_eq!(case.branches.len(), 11);
    assert_eq!(case.generators.len(), 5);

    let fleet = load_fleet(dataset_dir().join("fleet.dat")).unwrap();
    assert_eq!(fleet.buses().len(), 4);
    assert_eq!(fleet.operators().len(), 5);
}

#[test]
fn base_power_flow_solves_tightly() {
    let case = load_grid_case(dataset_dir().join("grid.dat")).unwrap();
    let solution =
        solve_power_flow(&case, &base_injections(&case), &SolverOptions::default()).unwrap();
    assert!(solution.iterations <= 20, "took {}", solution.iterations);
    assert!(solution.max_mismatch_pu < 1e-8);
}

#[test]
fn standing_fleet_is_quiescent_without_an_attack() {
    let case = load_grid_case(dataset_dir().join("grid.dat")).unwrap();
    let fleet = load_fleet(dataset_dir().join("fleet.dat")).unwrap();
    let slice = gridsim::attack::fleet_slice(
        &fleet,
        2030.0,
        &OperatorSelection::All,
        &BusSelection::All,
        1.0,
    )
    .unwrap();
    let power_factor = 0.98f64;
    let tan_phi = power_factor.acos().tan();
    let injections = apply_ev_load(&base_injections(&case), &slice, power_factor).unwrap();
    let preflow = solve_power_flow(&case, &injections, &SolverOptions::default()).unwrap();

    let config = SimulationConfig {
        horizon_s: 10.0,
        standing_loads: slice
            .iter()
            .map(|(&bus, &p_mw)| StandingLoad {
                bus,
                p_mw,
                q_mvar: p_mw * tan_phi,
            })
            .collect(),
        ..SimulationConfig::default()
    };
    let result = simulate_transient(&case, &preflow, &config).unwrap();
    for &f in &result.coi_freq_hz {
        assert!((f - 60.0).abs() < 1e-6, "drifted to {f}");
    }
}

#[test]
fn full_2030_shutdown_matches_the_study_envelope() {
    let case = load_grid_case(dataset_dir().join("grid.dat")).unwrap();
    let fleet = load_fleet(dataset_dir().join("fleet.dat")).unwrap();
    let scenario = load_scenario(dataset_dir().join("scenarios/all_2030.scn")).unwrap();
    let outcome = run_scenario(&case, &fleet, &scenario).unwrap();

    assert!(
        (outcome.summary.peak_freq_hz - 62.0).abs() < 0.4,
        "peak {}",
        outcome.summary.peak_freq_hz
    );
    assert!(
        (outcome.summary.steady_freq_hz - 60.54).abs() < 0.01,
        "steady {}",
        outcome.summary.steady_freq_hz
    );
    let settle = outcome.summary.settling_time_s.expect("must settle");
    assert!(settle <= 20.0, "settled at {settle}");
    assert!(outcome.summary.peak_v_pu < 1.1, "peak V {}", outcome.summary.peak_v_pu);

    let tripped: Vec<RelayKind> = outcome.relay_events.iter().map(|e| e.kind).collect();
    assert!(tripped.contains(&RelayKind::OverFreqNa));
    assert!(tripped.contains(&RelayKind::OverFreqIeee1547));
}
