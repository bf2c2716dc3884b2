//! Charging-fleet data and coordinated load-attack scenarios.
//!
//! The threat model: an actor who controls some share of the electric-vehicle
//! charging fleet — one operator's network, or several — and switches it off
//! or on in a single coordinated step. The fleet file records each operator's
//! connected charging power per bus at three projection anchors (2022, 2030,
//! 2050); intermediate years are linearly interpolated. A scenario picks a
//! year, a set of operators and buses, and the fraction of that fleet the
//! actor controls, and [`run_scenario`] turns it into a full study: power
//! flow with the whole year's fleet charging, a transient simulation of the
//! step, relay scan and blackout verdict.
//!
//! [`min_attack_power`] inverts the question — the smallest controlled block
//! of charging load that drives the frequency to a target — by bisecting on
//! the fraction, each probe a complete transient run.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::dynamics::{
    extract_summary, simulate_transient, DynamicsError, LoadStepEvent, SimulationConfig,
    StandingLoad, TransientResult, TransientSummary, NOMINAL_FREQ_HZ,
};
use crate::grid::{BusId, GridCase};
use crate::powerflow::{
    apply_ev_load, base_injections, line_loadings, solve_power_flow, PowerFlowError,
    PowerFlowSolution, SolverOptions,
};
use crate::protection::{
    blackout_verdict, scan_relays, scan_static_overloads, BlackoutVerdict, RelayEvent,
    RelaySettings,
};
use crate::textfmt::{self, Document};

/// First and last year the projection anchors cover.
pub const YEAR_MIN: f64 = 2022.0;
pub const YEAR_MAX: f64 = 2050.0;
const YEAR_MID: f64 = 2030.0;

/// One operator's connected charging power at one bus, MW at each anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetRecord {
    pub bus: BusId,
    pub operator: String,
    pub p2022_mw: f64,
    pub p2030_mw: f64,
    pub p2050_mw: f64,
}

impl FleetRecord {
    /// Connected power in the given year, linearly interpolated between the
    /// anchors.
    pub fn power_at(&self, year: f64) -> Result<f64, AttackError> {
        if !(YEAR_MIN..=YEAR_MAX).contains(&year) {
            return Err(AttackError::YearOutOfRange(year));
        }
        Ok(if year <= YEAR_MID {
            let w = (year - YEAR_MIN) / (YEAR_MID - YEAR_MIN);
            self.p2022_mw + w * (self.p2030_mw - self.p2022_mw)
        } else {
            let w = (year - YEAR_MID) / (YEAR_MAX - YEAR_MID);
            self.p2030_mw + w * (self.p2050_mw - self.p2030_mw)
        })
    }
}

/// The charging fleet: per-operator records only. Aggregate rows in the file
/// are checked against the operator sum and then dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct EvcsFleet {
    pub name: String,
    pub records: Vec<FleetRecord>,
}

impl EvcsFleet {
    /// Operator names in file order, first occurrence wins.
    pub fn operators(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for rec in &self.records {
            if !seen.iter().any(|s: &&str| s.eq_ignore_ascii_case(&rec.operator)) {
                seen.push(rec.operator.as_str());
            }
        }
        seen
    }

    pub fn buses(&self) -> Vec<BusId> {
        let mut buses: Vec<BusId> = self.records.iter().map(|r| r.bus).collect();
        buses.sort();
        buses.dedup();
        buses
    }

    /// Total connected charging power across the whole fleet in a year.
    pub fn total_mw(&self, year: f64) -> Result<f64, AttackError> {
        self.records.iter().map(|r| r.power_at(year)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorSelection {
    All,
    Named(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BusSelection {
    All,
    Named(Vec<BusId>),
}

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("operator `{0}` does not appear in the fleet")]
    UnknownOperator(String),
    #[error("bus {0} has no charging fleet")]
    BusNotInFleet(BusId),
    #[error("year {0} outside the {YEAR_MIN}..{YEAR_MAX} projection range")]
    YearOutOfRange(f64),
    #[error("fraction {0} outside [0, 1]")]
    BadFraction(f64),
    #[error("power factor {0} outside (0, 1]")]
    BadPowerFactor(f64),
    #[error("fleet aggregate mismatch at bus {bus}, {year}: stated {stated} MW, operators sum to {summed} MW")]
    Inconsistent {
        bus: BusId,
        year: u32,
        stated: f64,
        summed: f64,
    },
    #[error("bad scenario: {0}")]
    BadScenario(String),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("target {target_hz} Hz is out of reach: the full selection peaks at {peak_hz:.3} Hz")]
    TargetUnreachable { target_hz: f64, peak_hz: f64 },
}

fn text_err(path: &str, e: textfmt::TextError) -> AttackError {
    AttackError::Parse {
        path: path.to_string(),
        line: e.line,
        message: e.message,
    }
}

fn row_err(path: &str, line: usize, message: impl Into<String>) -> AttackError {
    AttackError::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

/// Name used by aggregate check rows in the fleet file.
const AGGREGATE_ROW: &str = "all";

/// Largest stated-vs-summed disagreement tolerated in aggregate rows, MW.
const AGGREGATE_TOL_MW: f64 = 1e-6;

pub fn load_fleet(path: impl AsRef<Path>) -> Result<EvcsFleet, AttackError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| AttackError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_fleet(&text, &path.display().to_string())
}

/// Parses a fleet file: a `[fleet]` section of
/// `bus operator p2022_mw p2030_mw p2050_mw` rows. Rows whose operator is
/// `All` state the per-bus total and are verified against the operator rows.
pub fn parse_fleet(text: &str, origin: &str) -> Result<EvcsFleet, AttackError> {
    let doc = Document::parse(text).map_err(|e| text_err(origin, e))?;
    let name = doc
        .preamble_value("name")
        .map(str::to_string)
        .unwrap_or_default();
    let section = doc
        .section("fleet")
        .ok_or_else(|| row_err(origin, 1, "missing [fleet] section"))?;

    let mut records = Vec::new();
    let mut aggregates: Vec<FleetRecord> = Vec::new();
    for row in &section.rows {
        if row.fields.len() != 5 {
            return Err(row_err(
                origin,
                row.line,
                format!("expected 5 fields (bus operator p2022 p2030 p2050), got {}", row.fields.len()),
            ));
        }
        let bus: usize = row.fields[0]
            .parse()
            .map_err(|_| row_err(origin, row.line, format!("bus: `{}` is not a bus id", row.fields[0])))?;
        let mut power = [0.0; 3];
        for (slot, (field, label)) in row.fields[2..]
            .iter()
            .zip(["p2022_mw", "p2030_mw", "p2050_mw"])
            .enumerate()
        {
            power[slot] = field.parse().map_err(|_| {
                row_err(origin, row.line, format!("{label}: `{field}` is not a number"))
            })?;
            if power[slot] < 0.0 {
                return Err(row_err(origin, row.line, format!("{label} must not be negative")));
            }
        }
        let record = FleetRecord {
            bus: BusId(bus),
            operator: row.fields[1].clone(),
            p2022_mw: power[0],
            p2030_mw: power[1],
            p2050_mw: power[2],
        };
        if record.operator.eq_ignore_ascii_case(AGGREGATE_ROW) {
            aggregates.push(record);
        } else {
            records.push(record);
        }
    }

    for agg in &aggregates {
        for (year, stated, pick) in [
            (2022u32, agg.p2022_mw, (|r: &FleetRecord| r.p2022_mw) as fn(&FleetRecord) -> f64),
            (2030, agg.p2030_mw, |r| r.p2030_mw),
            (2050, agg.p2050_mw, |r| r.p2050_mw),
        ] {
            let summed: f64 = records
                .iter()
                .filter(|r| r.bus == agg.bus)
                .map(pick)
                .sum();
            if (summed - stated).abs() > AGGREGATE_TOL_MW {
                return Err(AttackError::Inconsistent {
                    bus: agg.bus,
                    year,
                    stated,
                    summed,
                });
            }
        }
    }

    Ok(EvcsFleet { name, records })
}

/// Charging power per bus for a selection of the fleet: the chosen operators
/// at the chosen buses in the given year, scaled by the controlled fraction.
/// The result is exactly linear in `fraction`. Buses with no matching power
/// are left out.
pub fn fleet_slice(
    fleet: &EvcsFleet,
    year: f64,
    operators: &OperatorSelection,
    buses: &BusSelection,
    fraction: f64,
) -> Result<BTreeMap<BusId, f64>, AttackError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(AttackError::BadFraction(fraction));
    }
    if let OperatorSelection::Named(names) = operators {
        for name in names {
            if !fleet
                .records
                .iter()
                .any(|r| r.operator.eq_ignore_ascii_case(name))
            {
                return Err(AttackError::UnknownOperator(name.clone()));
            }
        }
    }
    if let BusSelection::Named(ids) = buses {
        for &bus in ids {
            if !fleet.records.iter().any(|r| r.bus == bus) {
                return Err(AttackError::BusNotInFleet(bus));
            }
        }
    }

    let mut slice = BTreeMap::new();
    for rec in &fleet.records {
        let op_match = match operators {
            OperatorSelection::All => true,
            OperatorSelection::Named(names) => names
                .iter()
                .any(|n| rec.operator.eq_ignore_ascii_case(n)),
        };
        let bus_match = match buses {
            BusSelection::All => true,
            BusSelection::Named(ids) => ids.contains(&rec.bus),
        };
        if op_match && bus_match {
            let mw = rec.power_at(year)? * fraction;
            if mw > 0.0 {
                *slice.entry(rec.bus).or_insert(0.0) += mw;
            }
        }
    }
    Ok(slice)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackDirection {
    /// Charging load disconnects: generation surplus, frequency rises.
    Shutdown,
    /// Idle chargers all start at once: deficit, frequency falls.
    TurnOn,
}

impl std::fmt::Display for AttackDirection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AttackDirection::Shutdown => "shutdown",
            AttackDirection::TurnOn => "turn_on",
        })
    }
}

/// Turns a fleet slice into timed load steps for the transient simulation.
pub fn to_events(
    slice: &BTreeMap<BusId, f64>,
    t_attack_s: f64,
    direction: AttackDirection,
    power_factor: f64,
) -> Result<Vec<LoadStepEvent>, AttackError> {
    if !(power_factor > 0.0 && power_factor <= 1.0) {
        return Err(AttackError::BadPowerFactor(power_factor));
    }
    let tan_phi = power_factor.acos().tan();
    let sign = match direction {
        AttackDirection::Shutdown => -1.0,
        AttackDirection::TurnOn => 1.0,
    };
    Ok(slice
        .iter()
        .map(|(&bus, &p_mw)| LoadStepEvent {
            time_s: t_attack_s,
            bus,
            delta_p_mw: sign * p_mw,
            delta_q_mvar: sign * p_mw * tan_phi,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackScenario {
    pub name: String,
    pub year: f64,
    pub operators: OperatorSelection,
    pub buses: BusSelection,
    /// Share of the selected fleet under the actor's control.
    pub fraction: f64,
    pub t_attack_s: f64,
    pub direction: AttackDirection,
    /// Power factor of the charging load, also used for the step's reactive
    /// share.
    pub power_factor: f64,
    pub relays: RelaySettings,
    pub step_s: f64,
    pub horizon_s: f64,
}

impl Default for AttackScenario {
    fn default() -> Self {
        AttackScenario {
            name: String::new(),
            year: YEAR_MID,
            operators: OperatorSelection::All,
            buses: BusSelection::All,
            fraction: 1.0,
            t_attack_s: 5.0,
            direction: AttackDirection::Shutdown,
            power_factor: 1.0,
            relays: RelaySettings::default(),
            step_s: 0.01,
            horizon_s: 25.0,
        }
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<AttackScenario, AttackError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| AttackError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text, &path.display().to_string())
}

fn strip_quotes(field: &str) -> &str {
    field
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(field)
}

/// Parses a scenario file: scalar keys in the preamble plus an optional
/// `[relays]` section overriding individual protection settings.
pub fn parse_scenario(text: &str, origin: &str) -> Result<AttackScenario, AttackError> {
    let doc = Document::parse(text).map_err(|e| text_err(origin, e))?;
    let mut scenario = AttackScenario::default();

    let number = |kv: &textfmt::KeyValue| -> Result<f64, AttackError> {
        kv.value.parse().map_err(|_| {
            row_err(origin, kv.line, format!("{}: `{}` is not a number", kv.key, kv.value))
        })
    };
    for kv in &doc.preamble {
        match kv.key.as_str() {
            "name" => scenario.name = kv.value.clone(),
            "year" => scenario.year = number(kv)?,
            "fraction" => scenario.fraction = number(kv)?,
            "t_attack_s" => scenario.t_attack_s = number(kv)?,
            "power_factor" => scenario.power_factor = number(kv)?,
            "step_s" => scenario.step_s = number(kv)?,
            "horizon_s" => scenario.horizon_s = number(kv)?,
            "direction" => {
                scenario.direction = match kv.value.as_str() {
                    "shutdown" => AttackDirection::Shutdown,
                    "turn_on" => AttackDirection::TurnOn,
                    other => {
                        return Err(row_err(
                            origin,
                            kv.line,
                            format!("direction must be `shutdown` or `turn_on`, got `{other}`"),
                        ))
                    }
                }
            }
            "operators" => {
                scenario.operators = if kv.value.eq_ignore_ascii_case("all") {
                    OperatorSelection::All
                } else {
                    OperatorSelection::Named(
                        kv.value
                            .split(',')
                            .map(|s| strip_quotes(s.trim()).to_string())
                            .filter(|s| !s.is_empty())
                            .collect(),
                    )
                }
            }
            "buses" => {
                scenario.buses = if kv.value.eq_ignore_ascii_case("all") {
                    BusSelection::All
                } else {
                    let mut ids = Vec::new();
                    for part in kv.value.split(',') {
                        let id: usize = part.trim().parse().map_err(|_| {
                            row_err(origin, kv.line, format!("buses: `{}` is not a bus id", part.trim()))
                        })?;
                        ids.push(BusId(id));
                    }
                    BusSelection::Named(ids)
                }
            }
            other => {
                return Err(row_err(origin, kv.line, format!("unknown scenario key `{other}`")));
            }
        }
    }

    if let Some(section) = doc.section("relays") {
        if !section.rows.is_empty() {
            return Err(row_err(
                origin,
                section.rows[0].line,
                "[relays] takes key = value settings, not rows",
            ));
        }
        for kv in &section.keys {
            let value = number(kv)?;
            match kv.key.as_str() {
                "over_freq_na_hz" => scenario.relays.over_freq_na_hz = value,
                "over_freq_ieee1547_hz" => scenario.relays.over_freq_ieee1547_hz = value,
                "under_freq_hz" => scenario.relays.under_freq_hz = value,
                "over_volt_pu" => scenario.relays.over_volt_pu = value,
                "under_volt_pu" => scenario.relays.under_volt_pu = value,
                "line_overload_pct" => scenario.relays.line_overload_pct = value,
                "dwell_s" => scenario.relays.dwell_s = value,
                other => {
                    return Err(row_err(origin, kv.line, format!("unknown relay setting `{other}`")));
                }
            }
        }
    }

    if !(scenario.fraction >= 0.0 && scenario.fraction <= 1.0) {
        return Err(AttackError::BadFraction(scenario.fraction));
    }
    if !(scenario.power_factor > 0.0 && scenario.power_factor <= 1.0) {
        return Err(AttackError::BadPowerFactor(scenario.power_factor));
    }
    Ok(scenario)
}

/// Everything a scenario run produces.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    /// Pre-attack power flow with the full year's fleet charging.
    pub preflow: PowerFlowSolution,
    /// Total charging power in the attacked slice, MW.
    pub attack_mw: f64,
    pub transient: TransientResult,
    pub summary: TransientSummary,
    pub relay_events: Vec<RelayEvent>,
    pub verdict: BlackoutVerdict,
}

/// Runs a scenario end to end: power flow with the whole year's fleet
/// connected, the attacked slice stepping at `t_attack_s`, relay scan over
/// the trace plus the static overload scan of the pre-attack flow, and the
/// blackout verdict over all of it.
pub fn run_scenario(
    case: &GridCase,
    fleet: &EvcsFleet,
    scenario: &AttackScenario,
) -> Result<ScenarioOutcome, AttackError> {
    let full_fleet = fleet_slice(
        fleet,
        scenario.year,
        &OperatorSelection::All,
        &BusSelection::All,
        1.0,
    )?;
    let injections = apply_ev_load(
        &base_injections(case),
        &full_fleet,
        scenario.power_factor,
    )?;
    let preflow = solve_power_flow(case, &injections, &SolverOptions::default())?;

    let attacked = fleet_slice(
        fleet,
        scenario.year,
        &scenario.operators,
        &scenario.buses,
        scenario.fraction,
    )?;
    let attack_mw = attacked.values().sum();
    let events = to_events(
        &attacked,
        scenario.t_attack_s,
        scenario.direction,
        scenario.power_factor,
    )?;
    // Describe the plugged-in fleet to the simulation so buses hosting both
    // machines and charging demand split their injections correctly.
    let tan_phi = scenario.power_factor.acos().tan();
    let standing_loads = full_fleet
        .iter()
        .map(|(&bus, &p_mw)| StandingLoad {
            bus,
            p_mw,
            q_mvar: p_mw * tan_phi,
        })
        .collect();
    let config = SimulationConfig {
        step_s: scenario.step_s,
        horizon_s: scenario.horizon_s,
        events,
        standing_loads,
    };
    let transient = simulate_transient(case, &preflow, &config)?;
    let summary = extract_summary(&transient)?;

    let mut relay_events = scan_relays(case, &transient, &scenario.relays);
    let static_loadings = line_loadings(case, &preflow);
    relay_events.extend(scan_static_overloads(case, &static_loadings, &scenario.relays));
    let verdict = blackout_verdict(case, &relay_events);

    Ok(ScenarioOutcome {
        preflow,
        attack_mw,
        transient,
        summary,
        relay_events,
        verdict,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinAttackPower {
    pub power_mw: f64,
    pub fraction: f64,
}

/// Smallest controlled charging power (within the scenario's operator and bus
/// selection) whose disconnection drives the frequency peak to `target_hz`.
/// Bisections stop once the bracket is narrower than `tol_mw`. A target at or
/// below nominal needs no attack at all and returns zero.
pub fn min_attack_power(
    case: &GridCase,
    fleet: &EvcsFleet,
    scenario: &AttackScenario,
    target_hz: f64,
    tol_mw: f64,
) -> Result<MinAttackPower, AttackError> {
    if target_hz <= NOMINAL_FREQ_HZ {
        return Ok(MinAttackPower {
            power_mw: 0.0,
            fraction: 0.0,
        });
    }
    let total_mw: f64 = fleet_slice(fleet, scenario.year, &scenario.operators, &scenario.buses, 1.0)?
        .values()
        .sum();
    let peak_at = |fraction: f64| -> Result<f64, AttackError> {
        let probe = AttackScenario {
            fraction,
            ..scenario.clone()
        };
        Ok(run_scenario(case, fleet, &probe)?.summary.peak_freq_hz)
    };

    let full_peak = peak_at(1.0)?;
    if full_peak < target_hz {
        return Err(AttackError::TargetUnreachable {
            target_hz,
            peak_hz: full_peak,
        });
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while (hi - lo) * total_mw > tol_mw {
        let mid = 0.5 * (lo + hi);
        if peak_at(mid)? >= target_hz {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(MinAttackPower {
        power_mw: hi * total_mw,
        fraction: hi,
    })
}

/// One operator's impact when its whole fleet is attacked alone.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorImpact {
    pub operator: String,
    pub attack_mw: f64,
    pub peak_freq_hz: f64,
    pub steady_freq_hz: f64,
}

/// Runs the template scenario once per operator, most disruptive first.
pub fn per_operator_sweep(
    case: &GridCase,
    fleet: &EvcsFleet,
    template: &AttackScenario,
) -> Result<Vec<OperatorImpact>, AttackError> {
    let mut impacts = Vec::new();
    for operator in fleet.operators() {
        let scenario = AttackScenario {
            operators: OperatorSelection::Named(vec![operator.to_string()]),
            ..template.clone()
        };
        let outcome = run_scenario(case, fleet, &scenario)?;
        impacts.push(OperatorImpact {
            operator: operator.to_string(),
            attack_mw: outcome.attack_mw,
            peak_freq_hz: outcome.summary.peak_freq_hz,
            steady_freq_hz: outcome.summary.steady_freq_hz,
        });
    }
    impacts.sort_by(|a, b| {
        b.peak_freq_hz
            .partial_cmp(&a.peak_freq_hz)
            .unwrap()
            .then_with(|| a.operator.cmp(&b.operator))
    });
    Ok(impacts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::tests::two_bus_case;

    const FLEET: &str = "\
name = test-fleet

[fleet]
# bus  operator   p2022_mw  p2030_mw  p2050_mw
2      \"All\"      3.0       30.0      90.0
2      \"Acme\"     2.0       20.0      60.0
2      \"Volt Co\"  1.0       10.0      30.0
";

    fn fleet() -> EvcsFleet {
        parse_fleet(FLEET, "fleet.dat").unwrap()
    }

    #[test]
    fn parses_and_validates_aggregates() {
        let fleet = fleet();
        assert_eq!(fleet.records.len(), 2); // aggregate row dropped
        assert_eq!(fleet.operators(), vec!["Acme", "Volt Co"]);
        assert_eq!(fleet.buses(), vec![BusId(2)]);
        assert_eq!(fleet.total_mw(2030.0).unwrap(), 30.0);
    }

    #[test]
    fn rejects_inconsistent_aggregate() {
        let bad = FLEET.replace("3.0       30.0", "3.0       31.0");
        match parse_fleet(&bad, "fleet.dat").unwrap_err() {
            AttackError::Inconsistent { bus, year, stated, summed } => {
                assert_eq!(bus, BusId(2));
                assert_eq!(year, 2030);
                assert_eq!(stated, 31.0);
                assert_eq!(summed, 30.0);
            }
            other => panic!("expected aggregate mismatch, got {other}"),
        }
    }

    #[test]
    fn interpolation_hits_anchors_and_midpoints() {
        let rec = &fleet().records[0]; // Acme: 2, 20, 60
        assert_eq!(rec.power_at(2022.0).unwrap(), 2.0);
        assert_eq!(rec.power_at(2030.0).unwrap(), 20.0);
        assert_eq!(rec.power_at(2050.0).unwrap(), 60.0);
        assert_eq!(rec.power_at(2026.0).unwrap(), 11.0); // halfway 2022..2030
        assert_eq!(rec.power_at(2040.0).unwrap(), 40.0); // halfway 2030..2050
        assert!(matches!(
            rec.power_at(2051.0),
            Err(AttackError::YearOutOfRange(_))
        ));
        assert!(matches!(
            rec.power_at(2021.0),
            Err(AttackError::YearOutOfRange(_))
        ));
    }

    #[test]
    fn slice_is_linear_in_fraction_and_filters() {
        let fleet = fleet();
        let full = fleet_slice(&fleet, 2030.0, &OperatorSelection::All, &BusSelection::All, 1.0)
            .unwrap();
        assert_eq!(full[&BusId(2)], 30.0);
        let quarter =
            fleet_slice(&fleet, 2030.0, &OperatorSelection::All, &BusSelection::All, 0.25)
                .unwrap();
        assert_eq!(quarter[&BusId(2)], 0.25 * full[&BusId(2)]);

        let acme = fleet_slice(
            &fleet,
            2030.0,
            &OperatorSelection::Named(vec!["acme".into()]), // case-insensitive
            &BusSelection::All,
            1.0,
        )
        .unwrap();
        assert_eq!(acme[&BusId(2)], 20.0);

        assert!(matches!(
            fleet_slice(
                &fleet,
                2030.0,
                &OperatorSelection::Named(vec!["Nobody".into()]),
                &BusSelection::All,
                1.0
            ),
            Err(AttackError::UnknownOperator(_))
        ));
        assert!(matches!(
            fleet_slice(
                &fleet,
                2030.0,
                &OperatorSelection::All,
                &BusSelection::Named(vec![BusId(7)]),
                1.0
            ),
            Err(AttackError::BusNotInFleet(_))
        ));
        assert!(matches!(
            fleet_slice(&fleet, 2030.0, &OperatorSelection::All, &BusSelection::All, 1.5),
            Err(AttackError::BadFraction(_))
        ));
    }

    #[test]
    fn events_carry_direction_and_reactive_share() {
        let mut slice = BTreeMap::new();
        slice.insert(BusId(2), 10.0);
        let off = to_events(&slice, 5.0, AttackDirection::Shutdown, 0.95).unwrap();
        assert_eq!(off.len(), 1);
        assert_eq!(off[0].delta_p_mw, -10.0);
        assert!((off[0].delta_q_mvar + 10.0 * 0.95f64.acos().tan()).abs() < 1e-12);
        let on = to_events(&slice, 5.0, AttackDirection::TurnOn, 1.0).unwrap();
        assert_eq!(on[0].delta_p_mw, 10.0);
        assert_eq!(on[0].delta_q_mvar, 0.0);
    }

    const SCENARIO: &str = "\
name = acme_2030
year = 2030
operators = \"Acme\"
buses = all
fraction = 0.5
t_attack_s = 2.0
direction = shutdown
power_factor = 0.95

[relays]
dwell_s = 0.25
";

    #[test]
    fn parses_scenario_with_relay_overrides() {
        let scn = parse_scenario(SCENARIO, "acme.scn").unwrap();
        assert_eq!(scn.name, "acme_2030");
        assert_eq!(scn.year, 2030.0);
        assert_eq!(scn.operators, OperatorSelection::Named(vec!["Acme".into()]));
        assert_eq!(scn.buses, BusSelection::All);
        assert_eq!(scn.fraction, 0.5);
        assert_eq!(scn.direction, AttackDirection::Shutdown);
        assert_eq!(scn.relays.dwell_s, 0.25);
        // Everything not overridden keeps its default.
        assert_eq!(scn.relays.over_freq_na_hz, 61.2);
        assert_eq!(scn.horizon_s, 25.0);
    }

    #[test]
    fn scenario_parse_rejects_unknown_keys_and_values() {
        let bad_key = SCENARIO.replace("fraction", "fractoin");
        assert!(matches!(
            parse_scenario(&bad_key, "s.scn"),
            Err(AttackError::Parse { .. })
        ));
        let bad_dir = SCENARIO.replace("shutdown", "off");
        assert!(matches!(
            parse_scenario(&bad_dir, "s.scn"),
            Err(AttackError::Parse { .. })
        ));
        let bad_relay = SCENARIO.replace("dwell_s", "dwells");
        assert!(matches!(
            parse_scenario(&bad_relay, "s.scn"),
            Err(AttackError::Parse { .. })
        ));
    }

    #[test]
    fn scenario_run_lifts_frequency_on_shutdown() {
        let case = two_bus_case();
        let fleet = fleet();
        let scenario = AttackScenario {
            year: 2030.0,
            t_attack_s: 1.0,
            horizon_s: 20.0,
            power_factor: 0.95,
            ..AttackScenario::default()
        };
        let outcome = run_scenario(&case, &fleet, &scenario).unwrap();
        assert_eq!(outcome.attack_mw, 30.0);
        assert!(outcome.summary.peak_freq_hz > 60.0);
        // 30 MW lost against stiffness 40: settles at 60 + 60·0.3/40 = 60.45.
        let analytic = crate::dynamics::steady_state_frequency_analytic(&case, 30.0);
        assert!((outcome.summary.steady_freq_hz - analytic).abs() < 1e-3);
        assert_eq!(outcome.verdict, BlackoutVerdict::None);
    }

    #[test]
    fn min_attack_power_brackets_the_target() {
        let case = two_bus_case();
        let fleet = fleet();
        let scenario = AttackScenario {
            year: 2030.0,
            t_attack_s: 1.0,
            horizon_s: 20.0,
            ..AttackScenario::default()
        };
        // Find the peak a half-fleet attack produces, then ask for it back.
        let half = run_scenario(
            &case,
            &fleet,
            &AttackScenario {
                fraction: 0.5,
                ..scenario.clone()
            },
        )
        .unwrap();
        let target = half.summary.peak_freq_hz;
        let min = min_attack_power(&case, &fleet, &scenario, target, 0.1).unwrap();
        assert!(
            (min.power_mw - 15.0).abs() <= 0.2,
            "expected ~15 MW, got {}",
            min.power_mw
        );
        assert!((min.fraction - 0.5).abs() <= 0.01);

        let nothing = min_attack_power(&case, &fleet, &scenario, 59.0, 0.1).unwrap();
        assert_eq!(nothing.power_mw, 0.0);

        assert!(matches!(
            min_attack_power(&case, &fleet, &scenario, 65.0, 0.1),
            Err(AttackError::TargetUnreachable { .. })
        ));
    }

    #[test]
    fn operator_sweep_orders_by_peak() {
        let case = two_bus_case();
        let fleet = fleet();
        let template = AttackScenario {
            year: 2030.0,
            t_attack_s: 1.0,
            horizon_s: 20.0,
            ..AttackScenario::default()
        };
        let impacts = per_operator_sweep(&case, &fleet, &template).unwrap();
        assert_eq!(impacts.len(), 2);
        assert_eq!(impacts[0].operator, "Acme"); // 20 MW beats 10 MW
        assert_eq!(impacts[1].operator, "Volt Co");
        assert!(impacts[0].peak_freq_hz > impacts[1].peak_freq_hz);
        assert_eq!(impacts[0].attack_mw, 20.0);
    }
}
