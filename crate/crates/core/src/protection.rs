//! Relay scans over a transient trace and a coarse blackout verdict.
//!
//! Relays here observe, they do not act back on the simulation: the scan
//! walks a finished [`TransientResult`] and reports the first time each
//! element would have tripped. That keeps runs comparable — the question is
//! "which protection would have fired", not a full cascading study.
//!
//! Frequency elements guard generator interconnections and compare against
//! the system (centre-of-inertia) frequency; two over-frequency levels are
//! carried, the North American utility practice ceiling and the wider
//! IEEE 1547 distributed-resource limit. Voltage elements watch each bus,
//! overload elements each branch. A dwell time requires the violation to
//! persist before the trip is logged.

use crate::dynamics::TransientResult;
use crate::grid::{BusId, GridCase};
use crate::powerflow::LineLoading;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaySettings {
    /// Generator over-frequency trip, utility practice, Hz.
    pub over_freq_na_hz: f64,
    /// Generator over-frequency trip, IEEE 1547 ceiling, Hz.
    pub over_freq_ieee1547_hz: f64,
    pub under_freq_hz: f64,
    pub over_volt_pu: f64,
    pub under_volt_pu: f64,
    pub line_overload_pct: f64,
    /// How long a violation must persist before the element trips.
    pub dwell_s: f64,
}

impl Default for RelaySettings {
    fn default() -> Self {
        RelaySettings {
            over_freq_na_hz: 61.2,
            over_freq_ieee1547_hz: 62.0,
            under_freq_hz: 58.8,
            over_volt_pu: 1.1,
            under_volt_pu: 0.9,
            line_overload_pct: 100.0,
            dwell_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RelayKind {
    OverFreqNa,
    OverFreqIeee1547,
    UnderFreq,
    OverVolt,
    UnderVolt,
    LineOverload,
}

impl std::fmt::Display for RelayKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            RelayKind::OverFreqNa => "over_freq_na",
            RelayKind::OverFreqIeee1547 => "over_freq_ieee1547",
            RelayKind::UnderFreq => "under_freq",
            RelayKind::OverVolt => "over_volt",
            RelayKind::UnderVolt => "under_volt",
            RelayKind::LineOverload => "line_overload",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RelayElement {
    Generator(BusId),
    Bus(BusId),
    Branch { from: BusId, to: BusId },
}

impl std::fmt::Display for RelayElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RelayElement::Generator(b) => write!(f, "generator@{b}"),
            RelayElement::Bus(b) => write!(f, "bus{b}"),
            RelayElement::Branch { from, to } => write!(f, "branch{from}-{to}"),
        }
    }
}

/// First qualifying violation of one element. `time_s` is `None` for static
/// scans where no timeline exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayEvent {
    pub kind: RelayKind,
    pub element: RelayElement,
    pub time_s: Option<f64>,
    /// Observed quantity when the violation began.
    pub value: f64,
    pub threshold: f64,
}

/// First time `violating` holds continuously for `dwell_s`, with the value at
/// the start of that stretch. Trip time is violation onset plus the dwell.
fn first_sustained(
    time_s: &[f64],
    values: &[f64],
    violating: impl Fn(f64) -> bool,
    dwell_s: f64,
) -> Option<(f64, f64)> {
    let mut onset: Option<usize> = None;
    for (k, &v) in values.iter().enumerate() {
        if violating(v) {
            let start = *onset.get_or_insert(k);
            if time_s[k] - time_s[start] >= dwell_s {
                return Some((time_s[start] + dwell_s, values[start]));
            }
        } else {
            onset = None;
        }
    }
    None
}

/// Scans a transient trace against the settings. At most one event is
/// reported per (element, kind) pair, at its first qualifying time.
pub fn scan_relays(
    case: &GridCase,
    result: &TransientResult,
    settings: &RelaySettings,
) -> Vec<RelayEvent> {
    let mut events = Vec::new();
    let t = &result.time_s;

    // Frequency elements: one per generator, all observing the system
    // frequency. Over-frequency trips at or above the setting.
    let freq_checks: [(RelayKind, f64, fn(f64, f64) -> bool); 3] = [
        (RelayKind::OverFreqNa, settings.over_freq_na_hz, |f, thr| f >= thr),
        (
            RelayKind::OverFreqIeee1547,
            settings.over_freq_ieee1547_hz,
            |f, thr| f >= thr,
        ),
        (RelayKind::UnderFreq, settings.under_freq_hz, |f, thr| f <= thr),
    ];
    for (kind, threshold, cmp) in freq_checks {
        if let Some((trip, value)) =
            first_sustained(t, &result.coi_freq_hz, |f| cmp(f, threshold), settings.dwell_s)
        {
            for gen in &case.generators {
                events.push(RelayEvent {
                    kind,
                    element: RelayElement::Generator(gen.bus),
                    time_s: Some(trip),
                    value,
                    threshold,
                });
            }
        }
    }

    for (i, bus) in case.buses.iter().enumerate() {
        let trace = &result.bus_v_pu[i];
        if let Some((trip, value)) =
            first_sustained(t, trace, |v| v > settings.over_volt_pu, settings.dwell_s)
        {
            events.push(RelayEvent {
                kind: RelayKind::OverVolt,
                element: RelayElement::Bus(bus.id),
                time_s: Some(trip),
                value,
                threshold: settings.over_volt_pu,
            });
        }
        if let Some((trip, value)) =
            first_sustained(t, trace, |v| v < settings.under_volt_pu, settings.dwell_s)
        {
            events.push(RelayEvent {
                kind: RelayKind::UnderVolt,
                element: RelayElement::Bus(bus.id),
                time_s: Some(trip),
                value,
                threshold: settings.under_volt_pu,
            });
        }
    }

    for (b, br) in case.branches.iter().enumerate() {
        if let Some((trip, value)) = first_sustained(
            t,
            &result.branch_loading_pct[b],
            |pct| pct > settings.line_overload_pct,
            settings.dwell_s,
        ) {
            events.push(RelayEvent {
                kind: RelayKind::LineOverload,
                element: RelayElement::Branch {
                    from: br.from,
                    to: br.to,
                },
                time_s: Some(trip),
                value,
                threshold: settings.line_overload_pct,
            });
        }
    }
    events
}

/// Overload check against a static power-flow loading set.
pub fn scan_static_overloads(
    case: &GridCase,
    loadings: &[LineLoading],
    settings: &RelaySettings,
) -> Vec<RelayEvent> {
    let _ = case;
    loadings
        .iter()
        .filter(|l| l.loading_pct > settings.line_overload_pct)
        .map(|l| RelayEvent {
            kind: RelayKind::LineOverload,
            element: RelayElement::Branch {
                from: l.from,
                to: l.to,
            },
            time_s: None,
            value: l.loading_pct,
            threshold: settings.line_overload_pct,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlackoutVerdict {
    /// Every generator stays connected and every load bus stays served.
    None,
    /// Some generation tripped or some load buses lost their supply path.
    Partial,
    /// All generation tripped on frequency, or no load bus can be served.
    SystemWide,
}

impl std::fmt::Display for BlackoutVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            BlackoutVerdict::None => "none",
            BlackoutVerdict::Partial => "partial",
            BlackoutVerdict::SystemWide => "system_wide",
        };
        f.write_str(name)
    }
}

/// Coarse outcome classification: which load buses can still be reached from
/// a surviving generator once frequency-tripped units disconnect and
/// overloaded branches are taken out of service.
pub fn blackout_verdict(case: &GridCase, events: &[RelayEvent]) -> BlackoutVerdict {
    let n = case.buses.len();
    let freq_kind = |k: RelayKind| {
        matches!(
            k,
            RelayKind::OverFreqNa | RelayKind::OverFreqIeee1547 | RelayKind::UnderFreq
        )
    };
    let tripped_gen = |bus: BusId| {
        events
            .iter()
            .any(|e| freq_kind(e.kind) && e.element == RelayElement::Generator(bus))
    };
    let gens_tripped: Vec<bool> = case.generators.iter().map(|g| tripped_gen(g.bus)).collect();
    let any_gen_tripped = gens_tripped.iter().any(|&t| t);
    let all_gens_tripped = gens_tripped.iter().all(|&t| t);

    let branch_out = |from: BusId, to: BusId| {
        events.iter().any(|e| {
            e.kind == RelayKind::LineOverload
                && matches!(e.element, RelayElement::Branch { from: f, to: t }
                    if (f == from && t == to) || (f == to && t == from))
        })
    };

    // Reachability from surviving generator buses over in-service branches.
    let mut adjacency = vec![Vec::new(); n];
    for br in &case.branches {
        if !branch_out(br.from, br.to) {
            adjacency[br.from.index()].push(br.to.index());
            adjacency[br.to.index()].push(br.from.index());
        }
    }
    let mut served = vec![false; n];
    let mut queue = Vec::new();
    for (gen, &tripped) in case.generators.iter().zip(&gens_tripped) {
        if !tripped && !served[gen.bus.index()] {
            served[gen.bus.index()] = true;
            queue.push(gen.bus.index());
        }
    }
    while let Some(i) = queue.pop() {
        for &j in &adjacency[i] {
            if !served[j] {
                served[j] = true;
                queue.push(j);
            }
        }
    }

    let load_buses: Vec<usize> = case
        .buses
        .iter()
        .enumerate()
        .filter(|(_, b)| b.load_p_mw > 0.0)
        .map(|(i, _)| i)
        .collect();
    let unserved = load_buses.iter().filter(|&&i| !served[i]).count();

    if all_gens_tripped || (!load_buses.is_empty() && unserved == load_buses.len()) {
        BlackoutVerdict::SystemWide
    } else if any_gen_tripped || unserved > 0 {
        BlackoutVerdict::Partial
    } else {
        BlackoutVerdict::None
    }
}
