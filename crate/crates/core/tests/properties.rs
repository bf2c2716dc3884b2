//! Structural properties of the bundled dataset and the simulation pipeline:
//! facts that hold regardless of calibrated parameter values.

use std::collections::BTreeMap;

use gridsim::attack::{
    self, fleet_slice, load_fleet, load_scenario, min_attack_power, run_scenario,
    AttackScenario, BusSelection, OperatorSelection,
};
use gridsim::dynamics::{simulate_transient, SimulationConfig, NOMINAL_FREQ_HZ};
use gridsim::grid::{load_grid_case, BusId, GridCase};
use gridsim::protection::scan_relays;

fn dataset_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../datasets/manhattan12")
}

fn bundled_case() -> GridCase {
    load_grid_case(dataset_dir().join("grid.dat")).unwrap()
}

fn bundled_fleet() -> attack::EvcsFleet {
    load_fleet(dataset_dir().join("fleet.dat")).unwrap()
}

fn scenario(name: &str) -> AttackScenario {
    load_scenario(dataset_dir().join("scenarios").join(format!("{name}.scn"))).unwrap()
}

/// With no events scheduled, the initial operating point is an equilibrium:
/// the frequency must hold nominal to numerical noise for the whole horizon.
#[test]
fn quiescent_case_holds_equilibrium() {
    let case = bundled_case();
    let initial = gridsim::powerflow::solve_power_flow(
        &case,
        &gridsim::powerflow::base_injections(&case),
        &gridsim::powerflow::SolverOptions::default(),
    )
    .unwrap();
    let config = SimulationConfig::default();
    let result = simulate_transient(&case, &initial, &config).unwrap();
    let drift = result
        .coi_freq_hz
        .iter()
        .map(|f| (f - NOMINAL_FREQ_HZ).abs())
        .fold(0.0, f64::max);
    assert!(drift < 1e-6, "frequency drifted {drift:.3e} Hz with no events");
}

/// Halving the integrator step must not move the frequency peak by more than
/// 0.005 Hz — the run is well inside the integrator's convergence regime.
#[test]
fn peak_is_stable_under_step_halving() {
    let case = bundled_case();
    let fleet = bundled_fleet();
    let coarse = scenario("all_2030");
    let fine = AttackScenario {
        step_s: coarse.step_s / 2.0,
        ..coarse.clone()
    };

    let peak_coarse = run_scenario(&case, &fleet, &coarse).unwrap().summary.peak_freq_hz;
    let peak_fine = run_scenario(&case, &fleet, &fine).unwrap().summary.peak_freq_hz;
    let shift = (peak_coarse - peak_fine).abs();
    assert!(shift < 0.005, "peak moved {shift:.4} Hz under step halving");
}

/// `fleet_slice` is linear in the fraction. For dyadic fractions every
/// per-record product is exact, so equality must be bit-for-bit even after
/// summing operators; single-operator selections are exact for any fraction.
#[test]
fn fleet_slice_is_linear_in_fraction() {
    let fleet = bundled_fleet();
    let full = fleet_slice(&fleet, 2030.0, &OperatorSelection::All, &BusSelection::All, 1.0)
        .unwrap();

    for fraction in [0.5, 0.25, 0.125, 0.0625] {
        let part =
            fleet_slice(&fleet, 2030.0, &OperatorSelection::All, &BusSelection::All, fraction)
                .unwrap();
        for (bus, &p) in &full {
            assert_eq!(part[bus], p * fraction, "bus {bus} at fraction {fraction}");
        }
    }

    let tesla = OperatorSelection::Named(vec!["Tesla".to_string()]);
    let tesla_full = fleet_slice(&fleet, 2030.0, &tesla, &BusSelection::All, 1.0).unwrap();
    for fraction in [0.63, 0.1, 0.999] {
        let part = fleet_slice(&fleet, 2030.0, &tesla, &BusSelection::All, fraction).unwrap();
        for (bus, &p) in &tesla_full {
            assert_eq!(part[bus], p * fraction, "bus {bus} at fraction {fraction}");
        }
    }
}

/// The growth interpolation reproduces its anchors exactly and never
/// decreases between them (every record in the dataset grows year on year).
#[test]
fn growth_interpolation_hits_anchors_and_is_monotone() {
    let fleet = bundled_fleet();
    for rec in &fleet.records {
        assert_eq!(rec.power_at(2022.0).unwrap(), rec.p2022_mw);
        assert_eq!(rec.power_at(2030.0).unwrap(), rec.p2030_mw);
        assert_eq!(rec.power_at(2050.0).unwrap(), rec.p2050_mw);

        let mut last = rec.power_at(2022.0).unwrap();
        for step in 1..=56 {
            let year = 2022.0 + 0.5 * step as f64;
            let next = rec.power_at(year).unwrap();
            assert!(
                next >= last,
                "{} at bus {} shrinks between {} and {}",
                rec.operator,
                rec.bus,
                year - 0.5,
                year
            );
            last = next;
        }
    }
}

/// Scanning the same trace twice gives the same events, and no
/// (element, kind) pair is ever reported twice.
#[test]
fn relay_scan_is_idempotent_and_deduplicated() {
    let case = bundled_case();
    let fleet = bundled_fleet();
    let outcome = run_scenario(&case, &fleet, &scenario("all_2030")).unwrap();

    let settings = scenario("all_2030").relays;
    let first = scan_relays(&case, &outcome.transient, &settings);
    let second = scan_relays(&case, &outcome.transient, &settings);
    assert_eq!(first, second);

    let mut seen = std::collections::BTreeSet::new();
    for e in &first {
        assert!(
            seen.insert((format!("{}", e.element), e.kind)),
            "duplicate event for {} / {}",
            e.element,
            e.kind
        );
    }
}

/// The whole-fleet attack is the union of the per-operator attacks: the
/// per-bus powers of the operator slices must sum to the aggregate slice.
#[test]
fn aggregate_attack_equals_union_of_operators() {
    let fleet = bundled_fleet();
    let all = fleet_slice(&fleet, 2030.0, &OperatorSelection::All, &BusSelection::All, 1.0)
        .unwrap();

    let mut summed: BTreeMap<BusId, f64> = BTreeMap::new();
    for operator in fleet.operators() {
        let slice = fleet_slice(
            &fleet,
            2030.0,
            &OperatorSelection::Named(vec![operator.to_string()]),
            &BusSelection::All,
            1.0,
        )
        .unwrap();
        for (bus, p) in slice {
            *summed.entry(bus).or_insert(0.0) += p;
        }
    }

    assert_eq!(all.keys().collect::<Vec<_>>(), summed.keys().collect::<Vec<_>>());
    for (bus, &p) in &all {
        assert!(
            (p - summed[bus]).abs() < 1e-9,
            "bus {bus}: aggregate {p} MW vs operator sum {} MW",
            summed[bus]
        );
    }
}

/// The bisection result is tight: the returned fraction reaches the target,
/// and one tolerance step below it does not.
#[test]
fn min_attack_power_is_consistent_with_resimulation() {
    let case = bundled_case();
    let fleet = bundled_fleet();
    let template = scenario("tesla_2030");
    let target_hz = 61.2;
    let tol_mw = 1.0;

    let found = min_attack_power(&case, &fleet, &template, target_hz, tol_mw).unwrap();
    let total_mw: f64 = fleet_slice(
        &fleet,
        template.year,
        &template.operators,
        &template.buses,
        1.0,
    )
    .unwrap()
    .values()
    .sum();

    let peak_at = |fraction: f64| {
        let probe = AttackScenario {
            fraction,
            ..template.clone()
        };
        run_scenario(&case, &fleet, &probe).unwrap().summary.peak_freq_hz
    };

    assert!(peak_at(found.fraction) >= target_hz);
    let below = (found.fraction - tol_mw / total_mw).max(0.0);
    assert!(peak_at(below) < target_hz);
}
