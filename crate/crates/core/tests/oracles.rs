//! Cross-checks of the Newton–Raphson solver against independent references:
//! a hand-derived closed form, a Gauss–Seidel solver with its own admittance
//! assembly, and power-balance bookkeeping that any correct solution must
//! satisfy.

use gridsim::grid::{
    Branch, BranchKind, Bus, BusId, BusKind, Generator, GridCase,
};
use gridsim::powerflow::{base_injections, line_loadings, solve_power_flow, SolverOptions};
use gridsim_testkit::{gauss_seidel, random_case, seeded_rng};

fn dataset_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../datasets/manhattan12")
}

/// Two buses, x = 0.1 p.u., a pure 1.0 p.u. active load. The exact solution
/// follows from P = (V1·V2/x)·sin δ and Q = 0:
/// δ = −asin(P·x)/2 and V2 = cos δ.
#[test]
fn newton_matches_the_two_bus_closed_form() {
    let case = GridCase {
        name: "twobus".to_string(),
        base_mva: 100.0,
        buses: vec![
            Bus {
                id: BusId(1),
                name: "a".to_string(),
                nominal_kv: 138.0,
                kind: BusKind::Slack,
                load_p_mw: 0.0,
                load_q_mvar: 0.0,
            },
            Bus {
                id: BusId(2),
                name: "b".to_string(),
                nominal_kv: 138.0,
                kind: BusKind::Pq,
                load_p_mw: 100.0,
                load_q_mvar: 0.0,
            },
        ],
        branches: vec![Branch {
            from: BusId(1),
            to: BusId(2),
            resistance_pu: 0.0,
            reactance_pu: 0.1,
            rating_mva: 500.0,
            kind: BranchKind::Line,
            side_kv: (138.0, 138.0),
        }],
        generators: vec![Generator {
            bus: BusId(1),
            p_set_mw: 0.0,
            capacity_mva: 300.0,
            inertia_h_s: 3.0,
            droop_r_pu: 0.05,
            governor_tc_s: 0.5,
            damping_d_pu: 0.0,
            xd_transient_pu: 0.3,
        }],
    };
    case.validate().unwrap();

    let solution =
        solve_power_flow(&case, &base_injections(&case), &SolverOptions::default()).unwrap();

    let delta = -(0.2f64).asin() / 2.0;
    let v2 = delta.cos();
    assert!((solution.angle_rad[1] - delta).abs() < 1e-9);
    assert!((solution.v_pu[1] - v2).abs() < 1e-9);
    assert!((solution.v_pu[0] - 1.0).abs() < 1e-12);
    assert!(solution.angle_rad[0].abs() < 1e-12);
}

/// 200 random 2–6-bus networks: Newton and Gauss–Seidel must land on the
/// same voltages to 1e-6 p.u. (magnitude) and 1e-6 rad (angle).
#[test]
fn newton_agrees_with_gauss_seidel_on_random_cases() {
    let mut rng = seeded_rng(0x9aa5);
    for tag in 0..200 {
        let case = random_case(&mut rng, tag);
        let injections = base_injections(&case);

        let newton = solve_power_flow(&case, &injections, &SolverOptions::default())
            .unwrap_or_else(|e| panic!("{}: Newton failed: {e}", case.name));
        let gs = gauss_seidel(&case, &injections, 1e-9, 50_000)
            .unwrap_or_else(|| panic!("{}: Gauss–Seidel failed to converge", case.name));

        for i in 0..case.buses.len() {
            let dv = (newton.v_pu[i] - gs.v_pu[i]).abs();
            let da = (newton.angle_rad[i] - gs.angle_rad[i]).abs();
            assert!(
                dv < 1e-6 && da < 1e-6,
                "{} bus {}: |Δv| = {dv:.2e}, |Δθ| = {da:.2e}",
                case.name,
                i + 1
            );
        }
    }
}

/// The solved injections must equal the sum of branch flows leaving each bus
/// — plain Kirchhoff bookkeeping between two views of the same solution.
#[test]
fn branch_flows_reconcile_with_injections() {
    let mut cases = vec![gridsim::grid::load_grid_case(dataset_dir().join("grid.dat")).unwrap()];
    let mut rng = seeded_rng(0x51de);
    for tag in 0..20 {
        cases.push(random_case(&mut rng, tag));
    }

    for case in &cases {
        let solution =
            solve_power_flow(case, &base_injections(case), &SolverOptions::default()).unwrap();
        for (i, bus) in case.buses.iter().enumerate() {
            let mut p = 0.0;
            let mut q = 0.0;
            for (br, flow) in case.branches.iter().zip(&solution.branch_flows) {
                if br.from == bus.id {
                    p += flow.s_from_mva.re;
                    q += flow.s_from_mva.im;
                } else if br.to == bus.id {
                    p += flow.s_to_mva.re;
                    q += flow.s_to_mva.im;
                }
            }
            assert!(
                (p - solution.p_injection_mw[i]).abs() < 1e-6,
                "{} bus {}: branch flows sum to {p} MW, injection {} MW",
                case.name,
                bus.id,
                solution.p_injection_mw[i]
            );
            assert!(
                (q - solution.q_injection_mvar[i]).abs() < 1e-6,
                "{} bus {}: branch flows sum to {q} Mvar, injection {} Mvar",
                case.name,
                bus.id,
                solution.q_injection_mvar[i]
            );
        }
    }
}

/// Loadings are defined off the heavier branch end, so they can never fall
/// below what either end's apparent power implies.
#[test]
fn loadings_bound_both_branch_ends() {
    let case = gridsim::grid::load_grid_case(dataset_dir().join("grid.dat")).unwrap();
    let solution =
        solve_power_flow(&case, &base_injections(&case), &SolverOptions::default()).unwrap();
    let loadings = line_loadings(&case, &solution);
    for ((br, flow), loading) in case
        .branches
        .iter()
        .zip(&solution.branch_flows)
        .zip(&loadings)
    {
        let bound = flow.s_from_mva.norm().max(flow.s_to_mva.norm());
        assert!((loading.loading_pct - 100.0 * bound / br.rating_mva).abs() < 1e-9);
        assert!(loading.loading_pct >= 100.0 * flow.s_from_mva.norm() / br.rating_mva - 1e-9);
    }
}
