//! AC power flow: full Newton–Raphson on the polar mismatch equations.
//!
//! Injection bookkeeping is in MW/Mvar; the solver works in per unit on the
//! case base. PQ buses hold their injections, PV buses hold voltage magnitude
//! at the setpoint, the slack bus holds magnitude and angle. Iteration starts
//! from a flat profile (1.0 p.u., 0 rad) and stops when the largest mismatch
//! drops below the tolerance.

use std::collections::BTreeMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{build_ybus, BusId, BusKind, GridCase};
use crate::linalg;

/// Net scheduled injection per bus (generation positive, load negative),
/// indexed like `GridCase::buses`.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionSet {
    pub p_mw: Vec<f64>,
    pub q_mvar: Vec<f64>,
}

impl InjectionSet {
    pub fn zero(n: usize) -> InjectionSet {
        InjectionSet {
            p_mw: vec![0.0; n],
            q_mvar: vec![0.0; n],
        }
    }
}

/// Scheduled injections of the unmodified case: generator setpoints minus
/// base loads. Slack and PV reactive entries carry only the load share; the
/// solver frees them anyway.
pub fn base_injections(case: &GridCase) -> InjectionSet {
    let mut inj = InjectionSet::zero(case.buses.len());
    for (i, bus) in case.buses.iter().enumerate() {
        inj.p_mw[i] = -bus.load_p_mw;
        inj.q_mvar[i] = -bus.load_q_mvar;
    }
    for gen in &case.generators {
        inj.p_mw[gen.bus.index()] += gen.p_set_mw;
    }
    inj
}

/// Returns a copy of `injections` with extra charging load drawn at the given
/// buses. `power_factor` (lagging, in `(0, 1]`) sets the reactive share:
/// `Q = P·tan(acos(pf))`.
pub fn apply_ev_load(
    injections: &InjectionSet,
    ev_load_mw: &BTreeMap<BusId, f64>,
    power_factor: f64,
) -> Result<InjectionSet, PowerFlowError> {
    if !(power_factor > 0.0 && power_factor <= 1.0) {
        return Err(PowerFlowError::BadPowerFactor(power_factor));
    }
    let tan_phi = power_factor.acos().tan();
    let mut out = injections.clone();
    for (&bus, &p_mw) in ev_load_mw {
        let idx = bus.index();
        if bus.0 == 0 || idx >= out.p_mw.len() {
            return Err(PowerFlowError::UnknownBus(bus));
        }
        out.p_mw[idx] -= p_mw;
        out.q_mvar[idx] -= p_mw * tan_phi;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Convergence tolerance on the largest power mismatch, per unit.
    pub tol_pu: f64,
    /// Maximum Newton updates before giving up.
    pub max_iter: usize,
    /// Voltage magnitude held at PV buses.
    pub pv_voltage_pu: f64,
    /// Voltage magnitude held at the slack bus.
    pub slack_voltage_pu: f64,
    /// When set, PV buses whose reactive output exceeds the capability left by
    /// their active dispatch are switched to PQ at the limit and re-solved.
    pub enforce_q_limits: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_pu: 1e-8,
            max_iter: 50,
            pv_voltage_pu: 1.0,
            slack_voltage_pu: 1.0,
            enforce_q_limits: false,
        }
    }
}

/// Complex power entering a branch at each end, in MVA on the system base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchFlow {
    pub from: BusId,
    pub to: BusId,
    pub s_from_mva: Complex64,
    pub s_to_mva: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub v_pu: Vec<f64>,
    pub angle_rad: Vec<f64>,
    /// Solved net injections, MW. Slack picks up losses; PV entries keep their
    /// schedule.
    pub p_injection_mw: Vec<f64>,
    /// Solved net injections, Mvar, including slack/PV reactive output.
    pub q_injection_mvar: Vec<f64>,
    /// One entry per case branch, in case order.
    pub branch_flows: Vec<BranchFlow>,
    /// Mismatch evaluations performed, counting the final converged check.
    pub iterations: usize,
    pub max_mismatch_pu: f64,
}

#[derive(Debug, Error)]
pub enum PowerFlowError {
    #[error("power flow did not converge: mismatch {max_mismatch_pu:.3e} p.u. after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        max_mismatch_pu: f64,
    },
    #[error("singular Jacobian at iteration {iteration} (pivot row {pivot_row})")]
    SingularJacobian { iteration: usize, pivot_row: usize },
    #[error("bus {0} does not exist in this case")]
    UnknownBus(BusId),
    #[error("power factor {0} outside (0, 1]")]
    BadPowerFactor(f64),
    #[error("injection set covers {found} buses, case has {expected}")]
    WrongInjectionLength { expected: usize, found: usize },
    #[error("reactive limit enforcement kept oscillating after {0} rounds")]
    QLimitCycling(usize),
}

/// Solves the AC power flow for the given scheduled injections.
pub fn solve_power_flow(
    case: &GridCase,
    injections: &InjectionSet,
    options: &SolverOptions,
) -> Result<PowerFlowSolution, PowerFlowError> {
    let n = case.buses.len();
    if injections.p_mw.len() != n || injections.q_mvar.len() != n {
        return Err(PowerFlowError::WrongInjectionLength {
            expected: n,
            found: injections.p_mw.len().min(injections.q_mvar.len()),
        });
    }
    let ybus = build_ybus(case);
    let p_sched: Vec<f64> = injections.p_mw.iter().map(|p| p / case.base_mva).collect();
    let q_sched: Vec<f64> = injections.q_mvar.iter().map(|q| q / case.base_mva).collect();

    let mut kinds: Vec<BusKind> = case.buses.iter().map(|b| b.kind).collect();
    let mut q_fixed = q_sched.clone();
    // Q-limit rounds: at most one switch per PV bus, plus the initial solve.
    let max_rounds = if options.enforce_q_limits {
        kinds.iter().filter(|k| **k == BusKind::Pv).count() + 1
    } else {
        1
    };

    let mut round = 0;
    loop {
        round += 1;
        let state = newton_solve(case, &ybus, &kinds, &p_sched, &q_fixed, options)?;
        if !options.enforce_q_limits {
            return Ok(finish(case, &ybus, injections, state));
        }
        let mut switched = false;
        for (i, bus) in case.buses.iter().enumerate() {
            if kinds[i] != BusKind::Pv {
                continue;
            }
            let (_, q_i) = bus_power(&ybus, &state.v, &state.theta, i);
            let limit = q_capability_pu(case, bus.id);
            if q_i > limit + 1e-9 || q_i < -limit - 1e-9 {
                kinds[i] = BusKind::Pq;
                q_fixed[i] = q_i.clamp(-limit, limit);
                switched = true;
            }
        }
        if !switched {
            return Ok(finish(case, &ybus, injections, state));
        }
        if round >= max_rounds {
            return Err(PowerFlowError::QLimitCycling(round));
        }
    }
}

/// Reactive capability left at a bus by its generators' active dispatch, p.u.
fn q_capability_pu(case: &GridCase, bus: BusId) -> f64 {
    case.generators_at(bus)
        .map(|g| {
            (g.capacity_mva.powi(2) - g.p_set_mw.powi(2)).max(0.0).sqrt()
        })
        .sum::<f64>()
        / case.base_mva
}

struct NewtonState {
    v: Vec<f64>,
    theta: Vec<f64>,
    iterations: usize,
    max_mismatch: f64,
}

fn newton_solve(
    case: &GridCase,
    ybus: &crate::grid::AdmittanceMatrix,
    kinds: &[BusKind],
    p_sched: &[f64],
    q_sched: &[f64],
    options: &SolverOptions,
) -> Result<NewtonState, PowerFlowError> {
    let n = case.buses.len();
    let mut v = vec![1.0; n];
    let mut theta = vec![0.0; n];
    for i in 0..n {
        match kinds[i] {
            BusKind::Slack => v[i] = options.slack_voltage_pu,
            BusKind::Pv => v[i] = options.pv_voltage_pu,
            BusKind::Pq => {}
        }
    }

    // Unknown ordering: angles at every non-slack bus, then magnitudes at PQ buses.
    let ang_buses: Vec<usize> = (0..n).filter(|&i| kinds[i] != BusKind::Slack).collect();
    let mag_buses: Vec<usize> = (0..n).filter(|&i| kinds[i] == BusKind::Pq).collect();
    let m = ang_buses.len() + mag_buses.len();

    let mut mismatch = vec![0.0; m];
    let mut max_mismatch = f64::INFINITY;
    for pass in 0..options.max_iter {
        max_mismatch = 0.0;
        for (r, &i) in ang_buses.iter().enumerate() {
            let (p_i, _) = bus_power(ybus, &v, &theta, i);
            mismatch[r] = p_sched[i] - p_i;
            max_mismatch = max_mismatch.max(mismatch[r].abs());
        }
        for (r, &i) in mag_buses.iter().enumerate() {
            let (_, q_i) = bus_power(ybus, &v, &theta, i);
            mismatch[ang_buses.len() + r] = q_sched[i] - q_i;
            max_mismatch = max_mismatch.max(mismatch[ang_buses.len() + r].abs());
        }
        if max_mismatch <= options.tol_pu {
            return Ok(NewtonState {
                v,
                theta,
                iterations: pass + 1,
                max_mismatch,
            });
        }
        let mut jac = build_jacobian(ybus, &v, &theta, &ang_buses, &mag_buses);
        let mut rhs = mismatch.clone();
        linalg::solve_real(&mut jac, &mut rhs, m).map_err(|e| {
            PowerFlowError::SingularJacobian {
                iteration: pass + 1,
                pivot_row: e.row,
            }
        })?;
        for (r, &i) in ang_buses.iter().enumerate() {
            theta[i] += rhs[r];
        }
        for (r, &i) in mag_buses.iter().enumerate() {
            v[i] += rhs[ang_buses.len() + r];
        }
    }
    Err(PowerFlowError::NonConvergence {
        iterations: options.max_iter,
        max_mismatch_pu: max_mismatch,
    })
}

/// Net complex power injected at bus `i` for the current voltage estimate,
/// per unit: `P + jQ = V_i Σ_k conj(Y_ik V_k)`.
fn bus_power(
    ybus: &crate::grid::AdmittanceMatrix,
    v: &[f64],
    theta: &[f64],
    i: usize,
) -> (f64, f64) {
    let mut p = 0.0;
    let mut q = 0.0;
    for &(k, y) in ybus.row(i) {
        let (g, b) = (y.re, y.im);
        let d = theta[i] - theta[k];
        let (sin_d, cos_d) = d.sin_cos();
        p += v[i] * v[k] * (g * cos_d + b * sin_d);
        q += v[i] * v[k] * (g * sin_d - b * cos_d);
    }
    (p, q)
}

/// Standard polar Jacobian, row-major, ordered like the mismatch vector.
fn build_jacobian(
    ybus: &crate::grid::AdmittanceMatrix,
    v: &[f64],
    theta: &[f64],
    ang_buses: &[usize],
    mag_buses: &[usize],
) -> Vec<f64> {
    let n = v.len();
    let m = ang_buses.len() + mag_buses.len();
    let mut col_of_ang = vec![usize::MAX; n];
    let mut col_of_mag = vec![usize::MAX; n];
    for (c, &i) in ang_buses.iter().enumerate() {
        col_of_ang[i] = c;
    }
    for (c, &i) in mag_buses.iter().enumerate() {
        col_of_mag[i] = ang_buses.len() + c;
    }

    let mut jac = vec![0.0; m * m];
    let mut powers = vec![(0.0, 0.0); n];
    for i in 0..n {
        powers[i] = bus_power(ybus, v, theta, i);
    }

    let mut fill = |row: usize, i: usize, is_q: bool| {
        let (p_i, q_i) = powers[i];
        for &(k, y) in ybus.row(i) {
            let (g, b) = (y.re, y.im);
            let d = theta[i] - theta[k];
            let (sin_d, cos_d) = d.sin_cos();
            if k == i {
                if col_of_ang[i] != usize::MAX {
                    jac[row * m + col_of_ang[i]] = if is_q {
                        p_i - g * v[i] * v[i]
                    } else {
                        -q_i - b * v[i] * v[i]
                    };
                }
                if col_of_mag[i] != usize::MAX {
                    jac[row * m + col_of_mag[i]] = if is_q {
                        q_i / v[i] - b * v[i]
                    } else {
                        p_i / v[i] + g * v[i]
                    };
                }
            } else {
                if col_of_ang[k] != usize::MAX {
                    jac[row * m + col_of_ang[k]] = if is_q {
                        -v[i] * v[k] * (g * cos_d + b * sin_d)
                    } else {
                        v[i] * v[k] * (g * sin_d - b * cos_d)
                    };
                }
                if col_of_mag[k] != usize::MAX {
                    jac[row * m + col_of_mag[k]] = if is_q {
                        v[i] * (g * sin_d - b * cos_d)
                    } else {
                        v[i] * (g * cos_d + b * sin_d)
                    };
                }
            }
        }
    };

    for (r, &i) in ang_buses.iter().enumerate() {
        fill(r, i, false);
    }
    for (r, &i) in mag_buses.iter().enumerate() {
        fill(ang_buses.len() + r, i, true);
    }
    jac
}

fn finish(
    case: &GridCase,
    ybus: &crate::grid::AdmittanceMatrix,
    injections: &InjectionSet,
    state: NewtonState,
) -> PowerFlowSolution {
    let n = case.buses.len();
    let base = case.base_mva;
    let mut p_out = vec![0.0; n];
    let mut q_out = vec![0.0; n];
    for i in 0..n {
        let (p, q) = bus_power(ybus, &state.v, &state.theta, i);
        p_out[i] = p * base;
        q_out[i] = q * base;
    }
    // Keep the schedule exactly where it is binding; the solved values differ
    // from it only by the converged mismatch.
    for (i, bus) in case.buses.iter().enumerate() {
        match bus.kind {
            BusKind::Pq => {
                p_out[i] = injections.p_mw[i];
                q_out[i] = injections.q_mvar[i];
            }
            BusKind::Pv => p_out[i] = injections.p_mw[i],
            BusKind::Slack => {}
        }
    }
    let volt = |i: usize| Complex64::from_polar(state.v[i], state.theta[i]);
    let branch_flows = case
        .branches
        .iter()
        .map(|br| {
            let y = Complex64::new(br.resistance_pu, br.reactance_pu).inv();
            let (i, j) = (br.from.index(), br.to.index());
            let (vi, vj) = (volt(i), volt(j));
            let s_from = vi * ((vi - vj) * y).conj() * base;
            let s_to = vj * ((vj - vi) * y).conj() * base;
            BranchFlow {
                from: br.from,
                to: br.to,
                s_from_mva: s_from,
                s_to_mva: s_to,
            }
        })
        .collect();
    PowerFlowSolution {
        v_pu: state.v,
        angle_rad: state.theta,
        p_injection_mw: p_out,
        q_injection_mvar: q_out,
        branch_flows,
        iterations: state.iterations,
        max_mismatch_pu: state.max_mismatch,
    }
}

/// Percent loading per branch: apparent power at the heavier end over rating.
#[derive(Debug, Clone, PartialEq)]
pub struct LineLoading {
    pub from: BusId,
    pub to: BusId,
    pub loading_pct: f64,
    pub p_mw_from: f64,
    pub q_mvar_from: f64,
}

pub fn line_loadings(case: &GridCase, solution: &PowerFlowSolution) -> Vec<LineLoading> {
    case.branches
        .iter()
        .zip(&solution.branch_flows)
        .map(|(br, flow)| {
            let s = flow.s_from_mva.norm().max(flow.s_to_mva.norm());
            LineLoading {
                from: br.from,
                to: br.to,
                loading_pct: 100.0 * s / br.rating_mva,
                p_mw_from: flow.s_from_mva.re,
                q_mvar_from: flow.s_from_mva.im,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::tests::two_bus_case;

    #[test]
    fn zero_injections_converge_in_one_evaluation() {
        let case = two_bus_case();
        let mut inj = base_injections(&case);
        inj.p_mw = vec![0.0, 0.0];
        inj.q_mvar = vec![0.0, 0.0];
        let sol = solve_power_flow(&case, &inj, &SolverOptions::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(sol.v_pu.iter().all(|&v| v == 1.0));
        assert!(sol.angle_rad.iter().all(|&a| a == 0.0));
    }

    /// Independent fixed-point solution of the 2-bus case for cross-checking.
    fn two_bus_fixed_point(s_load_pu: Complex64, z: Complex64) -> Complex64 {
        let v1 = Complex64::new(1.0, 0.0);
        let mut v2 = v1;
        for _ in 0..10_000 {
            let next = v1 - (s_load_pu / v2).conj() * z;
            if (next - v2).norm() < 1e-14 {
                return next;
            }
            v2 = next;
        }
        v2
    }

    #[test]
    fn matches_two_bus_fixed_point_to_solver_tolerance() {
        let case = two_bus_case();
        let inj = base_injections(&case);
        let sol = solve_power_flow(&case, &inj, &SolverOptions::default()).unwrap();
        let expect = two_bus_fixed_point(Complex64::new(0.5, 0.0), Complex64::new(0.01, 0.1));
        let got = Complex64::from_polar(sol.v_pu[1], sol.angle_rad[1]);
        assert!((got - expect).norm() < 1e-8, "got {got}, want {expect}");
        assert!(sol.max_mismatch_pu <= 1e-8);
    }

    #[test]
    fn slack_injection_covers_load_plus_losses() {
        let case = two_bus_case();
        let inj = base_injections(&case);
        let sol = solve_power_flow(&case, &inj, &SolverOptions::default()).unwrap();
        let loss: f64 = sol
            .branch_flows
            .iter()
            .map(|f| (f.s_from_mva + f.s_to_mva).re)
            .sum();
        assert!(loss > 0.0);
        assert!((sol.p_injection_mw[0] - 50.0 - loss).abs() < 1e-6);
    }

    #[test]
    fn loading_uses_heavier_end() {
        let case = two_bus_case();
        let inj = base_injections(&case);
        let sol = solve_power_flow(&case, &inj, &SolverOptions::default()).unwrap();
        let loadings = line_loadings(&case, &sol);
        let flow = &sol.branch_flows[0];
        let heavier = flow.s_from_mva.norm().max(flow.s_to_mva.norm());
        assert!((loadings[0].loading_pct - heavier).abs() < 1e-9); // rating is 100 MVA
        assert!(loadings[0].loading_pct > 0.0);
    }

    #[test]
    fn ev_load_carries_reactive_share() {
        let inj = InjectionSet::zero(2);
        let mut ev = BTreeMap::new();
        ev.insert(BusId(2), 10.0);
        let out = apply_ev_load(&inj, &ev, 0.95).unwrap();
        assert_eq!(out.p_mw[1], -10.0);
        let want_q = -10.0 * (0.95f64.acos()).tan();
        assert!((out.q_mvar[1] - want_q).abs() < 1e-12);
        let unity = apply_ev_load(&inj, &ev, 1.0).unwrap();
        assert_eq!(unity.q_mvar[1], 0.0);
        assert!(matches!(
            apply_ev_load(&inj, &ev, 0.0),
            Err(PowerFlowError::BadPowerFactor(_))
        ));
        ev.insert(BusId(9), 1.0);
        assert!(matches!(
            apply_ev_load(&inj, &ev, 1.0),
            Err(PowerFlowError::UnknownBus(BusId(9)))
        ));
    }
}
