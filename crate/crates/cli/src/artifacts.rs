//! File artifacts shared by the subcommands: CSV renderers for static and
//! time-series results, the JSON run summary, the per-directory manifest and
//! an optional gnuplot script for the transient traces.
//!
//! Every data artifact is a pure function of the inputs, so repeated runs
//! produce byte-identical files. The only wall-clock value lives in the
//! manifest, never in a data file.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use gridsim::attack::{AttackScenario, BusSelection, OperatorSelection, ScenarioOutcome};
use gridsim::dynamics::TransientResult;
use gridsim::grid::GridCase;
use gridsim::powerflow::LineLoading;
use gridsim::protection::RelayEvent;

/// Creates the parent directory if needed and writes `content` atomically
/// enough for our purposes (single write call).
pub fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating directory {}", parent.display()))?;
        }
    }
    std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

/// Static branch-loading table, one row per branch in case order.
pub fn loading_csv(loadings: &[LineLoading]) -> String {
    let mut out = String::from("branch_from,branch_to,loading_pct,p_mw_from,q_mvar_from\n");
    for l in loadings {
        out.push_str(&format!(
            "{},{},{:.3},{:.3},{:.3}\n",
            l.from, l.to, l.loading_pct, l.p_mw_from, l.q_mvar_from
        ));
    }
    out
}

/// Per-bus frequency trace in long form, one row per (step, bus).
pub fn frequency_csv(case: &GridCase, result: &TransientResult) -> String {
    let mut out = String::from("time_s,bus_id,freq_hz\n");
    for (k, &t) in result.time_s.iter().enumerate() {
        for (b, bus) in case.buses.iter().enumerate() {
            out.push_str(&format!("{:.3},{},{:.6}\n", t, bus.id, result.bus_freq_hz[b][k]));
        }
    }
    out
}

/// Per-bus voltage trace in long form, one row per (step, bus).
pub fn voltage_csv(case: &GridCase, result: &TransientResult) -> String {
    let mut out = String::from("time_s,bus_id,v_pu\n");
    for (k, &t) in result.time_s.iter().enumerate() {
        for (b, bus) in case.buses.iter().enumerate() {
            out.push_str(&format!("{:.3},{},{:.6}\n", t, bus.id, result.bus_v_pu[b][k]));
        }
    }
    out
}

/// Per-branch loading trace in long form, one row per (step, branch).
pub fn loading_trace_csv(case: &GridCase, result: &TransientResult) -> String {
    let mut out = String::from("time_s,branch_from,branch_to,loading_pct\n");
    for (k, &t) in result.time_s.iter().enumerate() {
        for (j, br) in case.branches.iter().enumerate() {
            out.push_str(&format!(
                "{:.3},{},{},{:.3}\n",
                t, br.from, br.to, result.branch_loading_pct[j][k]
            ));
        }
    }
    out
}

#[derive(Serialize)]
pub struct EventJson {
    kind: String,
    element: String,
    /// Absent for static pre-event overloads.
    time_s: Option<f64>,
    value: f64,
    threshold: f64,
}

fn event_json(e: &RelayEvent) -> EventJson {
    EventJson {
        kind: e.kind.to_string(),
        element: e.element.to_string(),
        time_s: e.time_s,
        value: e.value,
        threshold: e.threshold,
    }
}

/// The machine-readable outcome of a transient run. An aborted run (numerical
/// failure mid-simulation) still gets a summary carrying the reason.
#[derive(Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunSummary {
    Ok {
        scenario: String,
        attack_mw: f64,
        peak_freq_hz: f64,
        peak_time_s: f64,
        steady_freq_hz: f64,
        settling_time_s: Option<f64>,
        peak_v_pu: f64,
        min_v_pu: f64,
        relay_events: Vec<EventJson>,
        verdict: String,
    },
    Aborted {
        scenario: String,
        reason: String,
    },
}

impl RunSummary {
    pub fn from_outcome(scenario: &AttackScenario, outcome: &ScenarioOutcome) -> RunSummary {
        RunSummary::Ok {
            scenario: scenario.name.clone(),
            attack_mw: outcome.attack_mw,
            peak_freq_hz: outcome.summary.peak_freq_hz,
            peak_time_s: outcome.summary.peak_time_s,
            steady_freq_hz: outcome.summary.steady_freq_hz,
            settling_time_s: outcome.summary.settling_time_s,
            peak_v_pu: outcome.summary.peak_v_pu,
            min_v_pu: outcome.summary.min_v_pu,
            relay_events: outcome.relay_events.iter().map(event_json).collect(),
            verdict: outcome.verdict.to_string(),
        }
    }

    pub fn aborted(scenario: &AttackScenario, reason: String) -> RunSummary {
        RunSummary::Aborted {
            scenario: scenario.name.clone(),
            reason,
        }
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join("summary.json");
        let mut text = serde_json::to_string_pretty(self).context("encoding summary")?;
        text.push('\n');
        write_text(&path, &text)?;
        Ok(path)
    }
}

#[derive(Serialize)]
struct InputDigest {
    role: &'static str,
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct ScenarioEcho {
    name: String,
    year: f64,
    operators: String,
    buses: String,
    fraction: f64,
    t_attack_s: f64,
    direction: String,
    power_factor: f64,
    step_s: f64,
    horizon_s: f64,
    relay_over_freq_na_hz: f64,
    relay_over_freq_ieee1547_hz: f64,
    relay_under_freq_hz: f64,
    relay_over_volt_pu: f64,
    relay_under_volt_pu: f64,
    relay_line_overload_pct: f64,
    relay_dwell_s: f64,
}

fn scenario_echo(s: &AttackScenario) -> ScenarioEcho {
    let operators = match &s.operators {
        OperatorSelection::All => "all".to_string(),
        OperatorSelection::Named(names) => names.join(", "),
    };
    let buses = match &s.buses {
        BusSelection::All => "all".to_string(),
        BusSelection::Named(ids) => ids
            .iter()
            .map(|b| b.to_string())
            .collect::<Vec<_>>()
            .join(", "),
    };
    ScenarioEcho {
        name: s.name.clone(),
        year: s.year,
        operators,
        buses,
        fraction: s.fraction,
        t_attack_s: s.t_attack_s,
        direction: s.direction.to_string(),
        power_factor: s.power_factor,
        step_s: s.step_s,
        horizon_s: s.horizon_s,
        relay_over_freq_na_hz: s.relays.over_freq_na_hz,
        relay_over_freq_ieee1547_hz: s.relays.over_freq_ieee1547_hz,
        relay_under_freq_hz: s.relays.under_freq_hz,
        relay_over_volt_pu: s.relays.over_volt_pu,
        relay_under_volt_pu: s.relays.under_volt_pu,
        relay_line_overload_pct: s.relays.line_overload_pct,
        relay_dwell_s: s.relays.dwell_s,
    }
}

/// Provenance record written once per output directory. Data files stay free
/// of timestamps so they compare byte-for-byte across runs; the wall clock
/// lives here and only here.
#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    wall_clock_unix_s: u64,
    inputs: Vec<InputDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario: Option<ScenarioEcho>,
    determinism: &'static str,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Hashes the files a run actually read and writes `manifest.json` into the
/// output directory.
pub fn write_manifest(
    out_dir: &Path,
    command: &str,
    inputs: &[(&'static str, &Path)],
    scenario: Option<&AttackScenario>,
) -> Result<PathBuf> {
    let mut digests = Vec::with_capacity(inputs.len());
    for (role, path) in inputs {
        let bytes =
            std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
        digests.push(InputDigest {
            role,
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
    }
    let wall_clock_unix_s = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = Manifest {
        tool: "gridsim",
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        wall_clock_unix_s,
        inputs: digests,
        scenario: scenario.map(scenario_echo),
        determinism: "all data files are seed-free and byte-identical across runs with the \
                      same inputs; the wall clock appears only in this manifest",
    };
    let path = out_dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).context("encoding manifest")?;
    text.push('\n');
    write_text(&path, &text)?;
    Ok(path)
}

/// A ready-to-run gnuplot script rendering the three transient trace files.
pub fn gnuplot_script(n_buses: usize, n_branches: usize) -> String {
    format!(
        "# Renders the transient traces written next to this script.\n\
         # Usage: gnuplot plot.gp\n\
         set datafile separator comma\n\
         set xlabel 'time (s)'\n\
         set terminal pngcairo size 1200,700\n\
         \n\
         set output 'frequency.png'\n\
         set ylabel 'frequency (Hz)'\n\
         plot for [b=1:{n}] 'frequency.csv' every {n}::(b-1) using 1:3 with lines title sprintf('bus %d', b)\n\
         \n\
         set output 'voltage.png'\n\
         set ylabel 'voltage (p.u.)'\n\
         plot for [b=1:{n}] 'voltage.csv' every {n}::(b-1) using 1:3 with lines title sprintf('bus %d', b)\n\
         \n\
         set output 'loading.png'\n\
         set ylabel 'loading (% of rating)'\n\
         plot for [l=1:{m}] 'loading.csv' every {m}::(l-1) using 1:4 with lines title sprintf('branch %d', l)\n",
        n = n_buses,
        m = n_branches,
    )
}
