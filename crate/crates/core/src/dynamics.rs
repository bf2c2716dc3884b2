//! Transient frequency simulation with classical machines and governor droop.
//!
//! Each generator is a classical machine: a fixed EMF magnitude behind its
//! transient reactance, with a swing equation and a first-order governor.
//! The electromechanical network solve uses branch reactances only — in this
//! grid reactance dominates resistance on almost every branch, and dropping
//! the series losses makes generation balance load exactly, so a simulation
//! started from a converged power flow is exactly quiescent and the settled
//! frequency agrees with the analytic droop value instead of drifting by the
//! loss share. Loads are held at constant power and re-expressed as current
//! injections by a fixed-point loop around a pre-factorised network matrix.
//!
//! Integration is fixed-step fourth-order Runge–Kutta. Timed load steps model
//! blocks of charging demand connecting or disconnecting; the simulation
//! aborts with [`DynamicsError::LossOfSynchronism`] when any rotor leaves the
//! ±0.1 p.u. speed band.

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{BusId, GridCase};
use crate::linalg::ComplexLu;
use crate::powerflow::{solve_power_flow, InjectionSet, PowerFlowError, PowerFlowSolution, SolverOptions};

pub const NOMINAL_FREQ_HZ: f64 = 60.0;

/// Rotor speed deviation (p.u.) beyond which a machine is considered to have
/// lost synchronism and the run is abandoned.
pub const SPEED_ABORT_PU: f64 = 0.1;

/// A block of load connecting (positive) or disconnecting (negative) at a bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadStepEvent {
    pub time_s: f64,
    pub bus: BusId,
    pub delta_p_mw: f64,
    pub delta_q_mvar: f64,
}

/// Demand that is part of the initial operating point but absent from the
/// case records — plugged-in charging fleets, for instance. The initial
/// power flow already contains it inside the net bus injections; listing it
/// here lets the simulation split an injection into machine output and
/// demand at buses that host both. Standing loads at pure load buses carry
/// no extra information and are ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandingLoad {
    pub bus: BusId,
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    /// Integration step. Events are snapped to this grid.
    pub step_s: f64,
    pub horizon_s: f64,
    pub events: Vec<LoadStepEvent>,
    pub standing_loads: Vec<StandingLoad>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            step_s: 0.01,
            horizon_s: 25.0,
            events: Vec::new(),
            standing_loads: Vec::new(),
        }
    }
}

/// Final state of one machine, mostly useful for debugging runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineState {
    pub bus: BusId,
    pub rotor_angle_rad: f64,
    pub speed_dev_pu: f64,
    pub p_mech_pu: f64,
    pub emf_pu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientResult {
    pub time_s: Vec<f64>,
    /// Frequency trace per bus (case order): rotor speed at generator buses,
    /// the centre-of-inertia frequency elsewhere.
    pub bus_freq_hz: Vec<Vec<f64>>,
    pub bus_v_pu: Vec<Vec<f64>>,
    /// Apparent-power loading per branch (case order), percent of rating.
    pub branch_loading_pct: Vec<Vec<f64>>,
    /// Inertia-weighted mean rotor frequency.
    pub coi_freq_hz: Vec<f64>,
    pub first_event_time_s: Option<f64>,
    pub machines: Vec<MachineState>,
}

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("machine at bus {bus} lost synchronism at t = {time_s:.3} s")]
    LossOfSynchronism { time_s: f64, bus: BusId },
    #[error("network solve failed to converge at t = {time_s:.3} s")]
    AlgebraicSolveFailed { time_s: f64 },
    #[error("bad simulation config: {0}")]
    BadConfig(String),
    #[error("initialisation power flow failed: {0}")]
    Initialisation(#[from] PowerFlowError),
    #[error("frequency had not settled by the end of the run (tail variance {variance_hz2:.3e} Hz^2)")]
    Unsettled { variance_hz2: f64 },
}

/// Settled post-event frequency from the aggregate governor droop: every
/// governor contributes `capacity / droop` to the stiffness, so a net load
/// change of `delta_p_mw` (positive for load lost) moves the frequency by
/// `60 · ΔP_pu / (Σ cap_i/R_i + Σ D_i)`.
pub fn steady_state_frequency_analytic(case: &GridCase, delta_p_mw: f64) -> f64 {
    let stiffness: f64 = case
        .generators
        .iter()
        .map(|g| g.capacity_mva / case.base_mva / g.droop_r_pu + g.damping_d_pu * g.capacity_mva / case.base_mva)
        .sum();
    NOMINAL_FREQ_HZ + NOMINAL_FREQ_HZ * (delta_p_mw / case.base_mva) / stiffness
}

struct Machine {
    bus: BusId,
    bus_idx: usize,
    /// 2·H on the system base, p.u.·s.
    m_pu_s: f64,
    damping_pu: f64,
    /// Governor gain (capacity / base) / droop, p.u./p.u.
    gov_gain: f64,
    gov_tc_s: f64,
    /// Transient reactance on the system base.
    xdp_pu: f64,
    emf_mag: f64,
    p_set_pu: f64,
    angle0_rad: f64,
}

/// Simulates the case from a converged power flow. The solution fixes the
/// pre-event operating point; `config.events` then perturb the loads.
pub fn simulate_transient(
    case: &GridCase,
    initial: &PowerFlowSolution,
    config: &SimulationConfig,
) -> Result<TransientResult, DynamicsError> {
    let n = case.buses.len();
    if initial.v_pu.len() != n {
        return Err(DynamicsError::BadConfig(format!(
            "initial solution covers {} buses, case has {n}",
            initial.v_pu.len()
        )));
    }
    if !(config.step_s > 0.0) || !config.horizon_s.is_finite() || config.horizon_s < config.step_s {
        return Err(DynamicsError::BadConfig(format!(
            "need step_s > 0 and horizon_s >= step_s, got {} and {}",
            config.step_s, config.horizon_s
        )));
    }
    let h = config.step_s;
    let steps = (config.horizon_s / h).round() as usize;

    // Snap events to the step grid and order them.
    let mut events: Vec<(usize, LoadStepEvent)> = Vec::with_capacity(config.events.len());
    for ev in &config.events {
        if !(ev.time_s >= 0.0) {
            return Err(DynamicsError::BadConfig(format!(
                "event time {} s is negative",
                ev.time_s
            )));
        }
        if ev.bus.0 == 0 || ev.bus.index() >= n {
            return Err(DynamicsError::BadConfig(format!(
                "event bus {} does not exist",
                ev.bus
            )));
        }
        let k = (ev.time_s / h).round() as usize;
        if k > steps {
            return Err(DynamicsError::BadConfig(format!(
                "event at {} s lies beyond the {} s horizon",
                ev.time_s, config.horizon_s
            )));
        }
        events.push((k, *ev));
    }
    for standing in &config.standing_loads {
        if standing.bus.0 == 0 || standing.bus.index() >= n {
            return Err(DynamicsError::BadConfig(format!(
                "standing load names bus {} which does not exist",
                standing.bus
            )));
        }
    }
    events.sort_by_key(|(k, _)| *k);
    let first_event_time_s = events.first().map(|(k, _)| *k as f64 * h);

    // Re-balance the operating point on the reactance-only network so the
    // machine model starts in exact equilibrium. PQ and PV entries of the
    // given solution carry their schedules; the slack re-absorbs the loss
    // share that disappears with the resistances.
    let mut lossless = case.clone();
    for br in &mut lossless.branches {
        br.resistance_pu = 0.0;
    }
    let schedule = InjectionSet {
        p_mw: initial.p_injection_mw.clone(),
        q_mvar: initial.q_injection_mvar.clone(),
    };
    let flow = solve_power_flow(&lossless, &schedule, &SolverOptions::default())?;

    // Split bus-level generation among the machines there by capacity.
    let mut s_load_pu: Vec<Complex64> = (0..n)
        .map(|i| {
            Complex64::new(flow.p_injection_mw[i], flow.q_injection_mvar[i]) / -case.base_mva
        })
        .collect();
    let mut machines: Vec<Machine> = Vec::with_capacity(case.generators.len());
    for (i, bus) in case.buses.iter().enumerate() {
        let cap_at: f64 = case.generators_at(bus.id).map(|g| g.capacity_mva).sum();
        if cap_at == 0.0 {
            continue; // pure load bus: s_load_pu already holds the full draw
        }
        // Generator buses serve their recorded base load plus any declared
        // standing demand; the remainder of the injection is machine output.
        let standing: Complex64 = config
            .standing_loads
            .iter()
            .filter(|s| s.bus == bus.id)
            .map(|s| Complex64::new(s.p_mw, s.q_mvar))
            .sum::<Complex64>()
            / case.base_mva;
        let load = Complex64::new(bus.load_p_mw, bus.load_q_mvar) / case.base_mva + standing;
        s_load_pu[i] = load;
        let s_gen =
            Complex64::new(flow.p_injection_mw[i], flow.q_injection_mvar[i]) / case.base_mva + load;
        let v = Complex64::from_polar(flow.v_pu[i], flow.angle_rad[i]);
        for gen in case.generators_at(bus.id) {
            let share = gen.capacity_mva / cap_at;
            let s_g = s_gen * share;
            let xdp = gen.xd_transient_pu * case.base_mva / gen.capacity_mva;
            let current = (s_g / v).conj();
            let emf = v + Complex64::new(0.0, xdp) * current;
            machines.push(Machine {
                bus: bus.id,
                bus_idx: i,
                m_pu_s: 2.0 * gen.inertia_h_s * gen.capacity_mva / case.base_mva,
                damping_pu: gen.damping_d_pu * gen.capacity_mva / case.base_mva,
                gov_gain: gen.capacity_mva / case.base_mva / gen.droop_r_pu,
                gov_tc_s: gen.governor_tc_s,
                xdp_pu: xdp,
                emf_mag: emf.norm(),
                // Reference the governor at the initial electrical output so
                // the pre-event trajectory is constant.
                p_set_pu: s_g.re,
                angle0_rad: emf.arg(),
            });
        }
    }

    // Reactance-only network with each machine folded in as a Norton source.
    let mut y_dyn = vec![Complex64::new(0.0, 0.0); n * n];
    for br in &lossless.branches {
        let y = Complex64::new(0.0, br.reactance_pu).inv();
        let (i, j) = (br.from.index(), br.to.index());
        y_dyn[i * n + j] -= y;
        y_dyn[j * n + i] -= y;
        y_dyn[i * n + i] += y;
        y_dyn[j * n + j] += y;
    }
    for mach in &machines {
        y_dyn[mach.bus_idx * n + mach.bus_idx] += Complex64::new(0.0, mach.xdp_pu).inv();
    }
    let lu = ComplexLu::factor(y_dyn, n)
        .map_err(|_| DynamicsError::AlgebraicSolveFailed { time_s: 0.0 })?;

    // State layout: [rotor angles | speed deviations | mechanical powers].
    let nm = machines.len();
    let mut state = vec![0.0; 3 * nm];
    for (g, mach) in machines.iter().enumerate() {
        state[g] = mach.angle0_rad;
        state[2 * nm + g] = mach.p_set_pu;
    }
    let m_total: f64 = machines.iter().map(|m| m.m_pu_s).sum();

    let mut v_guess: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(flow.v_pu[i], flow.angle_rad[i]))
        .collect();

    let mut time_s = Vec::with_capacity(steps + 1);
    let mut coi_freq_hz = Vec::with_capacity(steps + 1);
    let mut bus_freq_hz = vec![Vec::with_capacity(steps + 1); n];
    let mut bus_v_pu = vec![Vec::with_capacity(steps + 1); n];
    let mut branch_loading_pct = vec![Vec::with_capacity(steps + 1); case.branches.len()];

    let mut next_event = 0usize;
    for k in 0..=steps {
        let t = k as f64 * h;
        while next_event < events.len() && events[next_event].0 == k {
            let ev = events[next_event].1;
            s_load_pu[ev.bus.index()] +=
                Complex64::new(ev.delta_p_mw, ev.delta_q_mvar) / case.base_mva;
            next_event += 1;
        }

        let volt = network_voltages(&lu, &machines, &state[..nm], &s_load_pu, &mut v_guess)
            .ok_or(DynamicsError::AlgebraicSolveFailed { time_s: t })?;

        time_s.push(t);
        let coi_dev = machines
            .iter()
            .enumerate()
            .map(|(g, m)| m.m_pu_s * state[nm + g])
            .sum::<f64>()
            / m_total;
        coi_freq_hz.push(NOMINAL_FREQ_HZ * (1.0 + coi_dev));
        for (i, bus) in case.buses.iter().enumerate() {
            let (mut mw, mut w) = (0.0, 0.0);
            for (g, mach) in machines.iter().enumerate() {
                if mach.bus == bus.id {
                    mw += mach.m_pu_s * state[nm + g];
                    w += mach.m_pu_s;
                }
            }
            let dev = if w > 0.0 { mw / w } else { coi_dev };
            bus_freq_hz[i].push(NOMINAL_FREQ_HZ * (1.0 + dev));
            bus_v_pu[i].push(volt[i].norm());
        }
        for (b, br) in lossless.branches.iter().enumerate() {
            let y = Complex64::new(0.0, br.reactance_pu).inv();
            let (vi, vj) = (volt[br.from.index()], volt[br.to.index()]);
            let s_from = vi * ((vi - vj) * y).conj();
            let s_to = vj * ((vj - vi) * y).conj();
            let s = s_from.norm().max(s_to.norm()) * case.base_mva;
            branch_loading_pct[b].push(100.0 * s / br.rating_mva);
        }

        if k == steps {
            break;
        }
        rk4_step(
            &mut state,
            h,
            &machines,
            &lu,
            &s_load_pu,
            &mut v_guess,
            t,
        )?;
        for (g, mach) in machines.iter().enumerate() {
            if state[nm + g].abs() > SPEED_ABORT_PU {
                return Err(DynamicsError::LossOfSynchronism {
                    time_s: t + h,
                    bus: mach.bus,
                });
            }
        }
    }

    let final_machines = machines
        .iter()
        .enumerate()
        .map(|(g, m)| MachineState {
            bus: m.bus,
            rotor_angle_rad: state[g],
            speed_dev_pu: state[nm + g],
            p_mech_pu: state[2 * nm + g],
            emf_pu: m.emf_mag,
        })
        .collect();

    Ok(TransientResult {
        time_s,
        bus_freq_hz,
        bus_v_pu,
        branch_loading_pct,
        coi_freq_hz,
        first_event_time_s,
        machines: final_machines,
    })
}

/// Solves the algebraic network for the given rotor angles and loads.
/// Constant-power loads are folded in by fixed-point iteration on their
/// current draw; the factorised matrix already contains the machine
/// admittances. Returns `None` when the iteration fails to contract.
fn network_voltages(
    lu: &ComplexLu,
    machines: &[Machine],
    rotor_angles: &[f64],
    s_load_pu: &[Complex64],
    v_guess: &mut [Complex64],
) -> Option<Vec<Complex64>> {
    let n = v_guess.len();
    let mut source = vec![Complex64::new(0.0, 0.0); n];
    for (g, mach) in machines.iter().enumerate() {
        source[mach.bus_idx] += Complex64::from_polar(mach.emf_mag, rotor_angles[g])
            / Complex64::new(0.0, mach.xdp_pu);
    }
    for _ in 0..100 {
        let mut rhs = source.clone();
        for i in 0..n {
            if s_load_pu[i] != Complex64::new(0.0, 0.0) {
                if v_guess[i].norm() < 0.2 {
                    return None; // collapsed voltage: constant power is meaningless here
                }
                rhs[i] -= (s_load_pu[i] / v_guess[i]).conj();
            }
        }
        lu.solve(&mut rhs);
        let mut diff: f64 = 0.0;
        for i in 0..n {
            diff = diff.max((rhs[i] - v_guess[i]).norm());
            v_guess[i] = rhs[i];
        }
        if diff < 1e-11 {
            return Some(v_guess.to_vec());
        }
    }
    None
}

/// Electrical power of each machine for the given network voltages.
fn electrical_power(machines: &[Machine], rotor_angles: &[f64], volt: &[Complex64]) -> Vec<f64> {
    machines
        .iter()
        .enumerate()
        .map(|(g, m)| {
            let emf = Complex64::from_polar(m.emf_mag, rotor_angles[g]);
            let current = (emf - volt[m.bus_idx]) / Complex64::new(0.0, m.xdp_pu);
            (emf * current.conj()).re
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn rk4_step(
    state: &mut [f64],
    h: f64,
    machines: &[Machine],
    lu: &ComplexLu,
    s_load_pu: &[Complex64],
    v_guess: &mut [Complex64],
    t: f64,
) -> Result<(), DynamicsError> {
    let derivs = |x: &[f64], v: &mut [Complex64]| -> Option<Vec<f64>> {
        let nm = machines.len();
        let volt = network_voltages(lu, machines, &x[..nm], s_load_pu, v)?;
        let p_e = electrical_power(machines, &x[..nm], &volt);
        let omega_s = 2.0 * std::f64::consts::PI * NOMINAL_FREQ_HZ;
        let mut dx = vec![0.0; 3 * nm];
        for (g, m) in machines.iter().enumerate() {
            let speed = x[nm + g];
            let p_m = x[2 * nm + g];
            dx[g] = omega_s * speed;
            dx[nm + g] = (p_m - p_e[g] - m.damping_pu * speed) / m.m_pu_s;
            dx[2 * nm + g] = (m.p_set_pu - m.gov_gain * speed - p_m) / m.gov_tc_s;
        }
        Some(dx)
    };
    let fail = DynamicsError::AlgebraicSolveFailed { time_s: t };

    let k1 = derivs(state, v_guess).ok_or_else(|| clone_err(&fail))?;
    let x2: Vec<f64> = state.iter().zip(&k1).map(|(x, k)| x + 0.5 * h * k).collect();
    let k2 = derivs(&x2, v_guess).ok_or_else(|| clone_err(&fail))?;
    let x3: Vec<f64> = state.iter().zip(&k2).map(|(x, k)| x + 0.5 * h * k).collect();
    let k3 = derivs(&x3, v_guess).ok_or_else(|| clone_err(&fail))?;
    let x4: Vec<f64> = state.iter().zip(&k3).map(|(x, k)| x + h * k).collect();
    let k4 = derivs(&x4, v_guess).ok_or_else(|| clone_err(&fail))?;
    for i in 0..state.len() {
        state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

fn clone_err(e: &DynamicsError) -> DynamicsError {
    match e {
        DynamicsError::AlgebraicSolveFailed { time_s } => {
            DynamicsError::AlgebraicSolveFailed { time_s: *time_s }
        }
        _ => unreachable!("only used for the algebraic failure"),
    }
}

/// Headline numbers of a transient run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransientSummary {
    /// Centre-of-inertia frequency furthest from nominal after the first
    /// event (over the whole run when there is none).
    pub peak_freq_hz: f64,
    pub peak_time_s: f64,
    /// Mean centre-of-inertia frequency over the final tenth of the run.
    pub steady_freq_hz: f64,
    /// First time after which the frequency stays within 0.05 Hz of the
    /// settled value.
    pub settling_time_s: Option<f64>,
    pub peak_v_pu: f64,
    pub min_v_pu: f64,
}

/// Tail variance above this marks a run that has not settled, Hz².
pub const SETTLE_VARIANCE_HZ2: f64 = 1e-4;

/// Frequency band around the settled value used for the settling time, Hz.
pub const SETTLE_BAND_HZ: f64 = 0.05;

pub fn extract_summary(result: &TransientResult) -> Result<TransientSummary, DynamicsError> {
    let len = result.coi_freq_hz.len();
    assert!(len > 1, "transient result holds no samples");
    let tail_start = len - (len / 10).max(1);
    let tail = &result.coi_freq_hz[tail_start..];
    let steady = tail.iter().sum::<f64>() / tail.len() as f64;
    let variance =
        tail.iter().map(|f| (f - steady).powi(2)).sum::<f64>() / tail.len() as f64;
    if variance >= SETTLE_VARIANCE_HZ2 {
        return Err(DynamicsError::Unsettled {
            variance_hz2: variance,
        });
    }

    let scan_from = match result.first_event_time_s {
        Some(t_ev) => result
            .time_s
            .iter()
            .position(|&t| t >= t_ev)
            .unwrap_or(0),
        None => 0,
    };
    let mut peak_idx = scan_from;
    for k in scan_from..len {
        if (result.coi_freq_hz[k] - NOMINAL_FREQ_HZ).abs()
            > (result.coi_freq_hz[peak_idx] - NOMINAL_FREQ_HZ).abs()
        {
            peak_idx = k;
        }
    }

    let mut settle_idx = scan_from;
    for k in (scan_from..len).rev() {
        if (result.coi_freq_hz[k] - steady).abs() >= SETTLE_BAND_HZ {
            settle_idx = k + 1;
            break;
        }
    }
    let settling_time_s = if settle_idx < len {
        Some(result.time_s[settle_idx])
    } else {
        None
    };

    let mut peak_v = f64::MIN;
    let mut min_v = f64::MAX;
    for trace in &result.bus_v_pu {
        for &v in trace {
            peak_v = peak_v.max(v);
            min_v = min_v.min(v);
        }
    }

    Ok(TransientSummary {
        peak_freq_hz: result.coi_freq_hz[peak_idx],
        peak_time_s: result.time_s[peak_idx],
        steady_freq_hz: steady,
        settling_time_s,
        peak_v_pu: peak_v,
        min_v_pu: min_v,
    })
}
