//! The four subcommand bodies. Each loads its inputs, runs the study, writes
//! artifacts into the output directory and prints a human-readable digest
//! (suppressed by `--quiet`).

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

use gridsim::attack::{
    self, AttackScenario, EvcsFleet, OperatorImpact, OperatorSelection,
};
use gridsim::grid::{load_grid_case, GridCase};
use gridsim::powerflow::{
    apply_ev_load, base_injections, line_loadings, solve_power_flow, LineLoading,
    PowerFlowSolution, SolverOptions,
};

use crate::artifacts;
use crate::{Cli, SweepMode};

/// Years spanned by the year-mode sweep, matching the published trend plot.
const SWEEP_YEARS: std::ops::RangeInclusive<u32> = 2022..=2030;

/// Bisection bracket width for the minimum-power search, MW.
const MIN_POWER_TOL_MW: f64 = 1.0;

fn load_case(cli: &Cli) -> Result<GridCase> {
    load_grid_case(&cli.case).context("loading the grid case")
}

fn load_fleet(cli: &Cli) -> Result<EvcsFleet> {
    attack::load_fleet(&cli.fleet).context("loading the fleet dataset")
}

/// Parses `--operators`: `all` or a comma-separated list of names.
fn parse_operators(arg: &str) -> OperatorSelection {
    if arg.trim().eq_ignore_ascii_case("all") {
        OperatorSelection::All
    } else {
        OperatorSelection::Named(
            arg.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect(),
        )
    }
}

/// Parses `--year`: `none` for the bare case, otherwise a projection year.
fn parse_year(arg: &str) -> Result<Option<f64>> {
    if arg.trim().eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let year: f64 = arg.trim().parse().map_err(|_| {
        crate::BadArgument(format!("`--year {arg}` is neither `none` nor a number"))
    })?;
    Ok(Some(year))
}

/// Solves the static power flow with the selected fleet snapshot connected.
fn snapshot_flow(
    case: &GridCase,
    fleet: &EvcsFleet,
    year: Option<f64>,
    operators: &OperatorSelection,
    power_factor: f64,
) -> Result<(PowerFlowSolution, Vec<LineLoading>)> {
    let mut injections = base_injections(case);
    if let Some(year) = year {
        let charging = attack::fleet_slice(
            fleet,
            year,
            operators,
            &attack::BusSelection::All,
            1.0,
        )
        .context("selecting the charging fleet")?;
        injections = apply_ev_load(&injections, &charging, power_factor)
            .context("connecting the charging load")?;
    }
    let solution = solve_power_flow(case, &injections, &SolverOptions::default())
        .context("solving the power flow")?;
    let loadings = line_loadings(case, &solution);
    Ok((solution, loadings))
}

fn snapshot_label(year: Option<f64>, operators: &str) -> String {
    match year {
        None => "no charging fleet".to_string(),
        Some(y) => format!("fleet year {y}, operators {operators}"),
    }
}

pub fn cmd_powerflow(cli: &Cli, year: &str, operators: &str, out: Option<&Path>) -> Result<()> {
    let case = load_case(cli)?;
    let year = parse_year(year)?;
    let selection = parse_operators(operators);
    let fleet = if year.is_some() { Some(load_fleet(cli)?) } else { None };
    // The bare case needs no fleet file; an empty placeholder keeps one code path.
    let empty = EvcsFleet { name: String::new(), records: Vec::new() };
    let (solution, loadings) = snapshot_flow(
        &case,
        fleet.as_ref().unwrap_or(&empty),
        year,
        &selection,
        cli.pf,
    )?;

    let csv_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cli.out_dir.join("loading.csv"));
    artifacts::write_text(&csv_path, &artifacts::loading_csv(&loadings))?;
    let mut inputs: Vec<(&'static str, &Path)> = vec![("case", cli.case.as_path())];
    if fleet.is_some() {
        inputs.push(("fleet", cli.fleet.as_path()));
    }
    artifacts::write_manifest(&cli.out_dir, "powerflow", &inputs, None)?;

    if !cli.quiet {
        println!("Branch loadings ({})", snapshot_label(year, operators));
        println!("{:>8}  {:>10}  {:>10}  {:>9}", "branch", "MW", "Mvar", "loading");
        for l in &loadings {
            let flag = if l.loading_pct > 100.0 { "  OVERLOAD" } else { "" };
            println!(
                "{:>8}  {:>10.1}  {:>10.1}  {:>8.1}%{}",
                format!("{}-{}", l.from, l.to),
                l.p_mw_from,
                l.q_mvar_from,
                l.loading_pct,
                flag
            );
        }
        println!(
            "converged in {} iterations, max mismatch {:.2e} p.u.",
            solution.iterations, solution.max_mismatch_pu
        );
        println!("loading table written to {}", csv_path.display());
    }
    Ok(())
}

pub fn cmd_transient(cli: &Cli, scenario_path: &Path, gnuplot: bool) -> Result<()> {
    let case = load_case(cli)?;
    let fleet = load_fleet(cli)?;
    let scenario = attack::load_scenario(scenario_path).context("loading the scenario")?;

    let inputs: Vec<(&'static str, &Path)> = vec![
        ("case", cli.case.as_path()),
        ("fleet", cli.fleet.as_path()),
        ("scenario", scenario_path),
    ];

    let outcome = match attack::run_scenario(&case, &fleet, &scenario) {
        Ok(outcome) => outcome,
        Err(err) if crate::exit_code_for_attack(&err) == crate::EXIT_NUMERICAL => {
            // A diverged or unsettled simulation still documents itself: the
            // summary carries the abort reason, and the error propagates so
            // the process exits with the numerical-failure code.
            artifacts::RunSummary::aborted(&scenario, err.to_string()).write(&cli.out_dir)?;
            artifacts::write_manifest(&cli.out_dir, "transient", &inputs, Some(&scenario))?;
            return Err(anyhow::Error::new(err).context("transient simulation aborted"));
        }
        Err(err) => return Err(anyhow::Error::new(err).context("running the scenario")),
    };

    artifacts::write_text(
        &cli.out_dir.join("frequency.csv"),
        &artifacts::frequency_csv(&case, &outcome.transient),
    )?;
    artifacts::write_text(
        &cli.out_dir.join("voltage.csv"),
        &artifacts::voltage_csv(&case, &outcome.transient),
    )?;
    artifacts::write_text(
        &cli.out_dir.join("loading.csv"),
        &artifacts::loading_trace_csv(&case, &outcome.transient),
    )?;
    artifacts::RunSummary::from_outcome(&scenario, &outcome).write(&cli.out_dir)?;
    if gnuplot {
        artifacts::write_text(
            &cli.out_dir.join("plot.gp"),
            &artifacts::gnuplot_script(case.buses.len(), case.branches.len()),
        )?;
    }
    artifacts::write_manifest(&cli.out_dir, "transient", &inputs, Some(&scenario))?;

    if !cli.quiet {
        println!(
            "scenario `{}`: {:.1} MW stepped at t = {} s",
            scenario.name, outcome.attack_mw, scenario.t_attack_s
        );
        println!(
            "peak {:.3} Hz at {:.2} s, steady {:.3} Hz, voltages in [{:.3}, {:.3}] p.u.",
            outcome.summary.peak_freq_hz,
            outcome.summary.peak_time_s,
            outcome.summary.steady_freq_hz,
            outcome.summary.min_v_pu,
            outcome.summary.peak_v_pu,
        );
        if outcome.relay_events.is_empty() {
            println!("no relay trips");
        } else {
            for e in &outcome.relay_events {
                match e.time_s {
                    Some(t) => println!(
                        "relay {} on {} at t = {:.2} s ({:.3} vs {:.3})",
                        e.kind, e.element, t, e.value, e.threshold
                    ),
                    None => println!(
                        "relay {} on {} pre-event ({:.3} vs {:.3})",
                        e.kind, e.element, e.value, e.threshold
                    ),
                }
            }
        }
        println!("blackout verdict: {}", outcome.verdict);
        println!("artifacts written to {}", cli.out_dir.display());
    }
    Ok(())
}

/// Template used by sweeps when no scenario file is given: the whole fleet in
/// the given year drops at t = 5 s.
fn sweep_template(cli: &Cli, scenario: Option<&Path>) -> Result<AttackScenario> {
    match scenario {
        Some(path) => attack::load_scenario(path).context("loading the scenario template"),
        None => Ok(AttackScenario {
            name: "sweep".to_string(),
            year: 2030.0,
            power_factor: cli.pf,
            ..AttackScenario::default()
        }),
    }
}

pub fn cmd_sweep(
    cli: &Cli,
    mode: SweepMode,
    target_hz: f64,
    scenario: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let case = load_case(cli)?;
    let fleet = load_fleet(cli)?;
    let template = sweep_template(cli, scenario)?;

    let default_name = match mode {
        SweepMode::Operator => "sweep_operator.csv",
        SweepMode::Year => "sweep_year.csv",
        SweepMode::MinPower => "sweep_min_power.csv",
    };
    let csv_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cli.out_dir.join(default_name));

    match mode {
        SweepMode::Year => {
            let rows = year_sweep(&case, &fleet, &template)?;
            let mut csv = String::from("year,scope,peak_hz,steady_hz\n");
            for (year, scope, impact) in &rows {
                writeln!(
                    csv,
                    "{},{},{:.4},{:.4}",
                    year, scope, impact.peak_freq_hz, impact.steady_freq_hz
                )?;
            }
            artifacts::write_text(&csv_path, &csv)?;
            if !cli.quiet {
                println!("Peak and steady frequency by fleet year");
                println!("{:>6}  {:>6}  {:>9}  {:>9}", "year", "scope", "peak Hz", "steady Hz");
                for (year, scope, impact) in &rows {
                    println!(
                        "{:>6}  {:>6}  {:>9.3}  {:>9.3}",
                        year, scope, impact.peak_freq_hz, impact.steady_freq_hz
                    );
                }
            }
        }
        SweepMode::Operator => {
            let impacts = attack::per_operator_sweep(&case, &fleet, &template)
                .context("sweeping operators")?;
            let mut csv = String::from("operator,attack_mw,peak_hz,steady_hz\n");
            for i in &impacts {
                writeln!(
                    csv,
                    "{},{:.3},{:.4},{:.4}",
                    i.operator, i.attack_mw, i.peak_freq_hz, i.steady_freq_hz
                )?;
            }
            artifacts::write_text(&csv_path, &csv)?;
            if !cli.quiet {
                println!("Per-operator attacks, fleet year {}", template.year);
                println!(
                    "{:<12}  {:>9}  {:>9}  {:>9}",
                    "operator", "MW", "peak Hz", "steady Hz"
                );
                for i in &impacts {
                    println!(
                        "{:<12}  {:>9.1}  {:>9.3}  {:>9.3}",
                        i.operator, i.attack_mw, i.peak_freq_hz, i.steady_freq_hz
                    );
                }
            }
        }
        SweepMode::MinPower => {
            let mut csv = String::from("target_hz,reachable,power_mw,fraction\n");
            match attack::min_attack_power(&case, &fleet, &template, target_hz, MIN_POWER_TOL_MW)
            {
                Ok(found) => {
                    writeln!(
                        csv,
                        "{},true,{:.3},{:.6}",
                        target_hz, found.power_mw, found.fraction
                    )?;
                    artifacts::write_text(&csv_path, &csv)?;
                    if !cli.quiet {
                        println!(
                            "a {:.3} Hz peak needs {:.1} MW — {:.1}% of the selected fleet",
                            target_hz,
                            found.power_mw,
                            100.0 * found.fraction
                        );
                    }
                }
                // An unreachable target is a finding, not a failure: record it
                // and exit cleanly.
                Err(attack::AttackError::TargetUnreachable { target_hz, peak_hz }) => {
                    writeln!(csv, "{target_hz},false,,")?;
                    artifacts::write_text(&csv_path, &csv)?;
                    if !cli.quiet {
                        println!(
                            "target {target_hz} Hz is out of reach: the full selection peaks at {peak_hz:.3} Hz"
                        );
                    }
                }
                Err(err) => {
                    return Err(anyhow::Error::new(err).context("searching the minimum power"))
                }
            }
        }
    }

    let mut inputs: Vec<(&'static str, &Path)> =
        vec![("case", cli.case.as_path()), ("fleet", cli.fleet.as_path())];
    if let Some(path) = scenario {
        inputs.push(("scenario", path));
    }
    artifacts::write_manifest(&cli.out_dir, "sweep", &inputs, Some(&template))?;
    if !cli.quiet {
        println!("sweep table written to {}", csv_path.display());
    }
    Ok(())
}

/// Full-fraction shutdowns for every sweep year, whole fleet and the largest
/// operator alone.
fn year_sweep(
    case: &GridCase,
    fleet: &EvcsFleet,
    template: &AttackScenario,
) -> Result<Vec<(u32, &'static str, OperatorImpact)>> {
    let scopes: [(&'static str, OperatorSelection); 2] = [
        ("all", OperatorSelection::All),
        ("tesla", OperatorSelection::Named(vec!["Tesla".to_string()])),
    ];
    let mut rows = Vec::new();
    for year in SWEEP_YEARS {
        for (label, selection) in &scopes {
            let scenario = AttackScenario {
                year: year as f64,
                operators: selection.clone(),
                fraction: 1.0,
                ..template.clone()
            };
            let outcome = attack::run_scenario(case, fleet, &scenario)
                .with_context(|| format!("simulating {label} in {year}"))?;
            rows.push((
                year,
                *label,
                OperatorImpact {
                    operator: label.to_string(),
                    attack_mw: outcome.attack_mw,
                    peak_freq_hz: outcome.summary.peak_freq_hz,
                    steady_freq_hz: outcome.summary.steady_freq_hz,
                },
            ));
        }
    }
    Ok(rows)
}

/// Renders every study table into one markdown report from the bundled (or
/// overridden) dataset.
pub fn cmd_report(cli: &Cli, out: Option<&Path>) -> Result<()> {
    let case = load_case(cli)?;
    let fleet = load_fleet(cli)?;

    let mut md = String::new();
    writeln!(md, "# Charging-fleet attack study: {}", case.name)?;
    writeln!(md)?;
    writeln!(
        md,
        "Static loadings, per-operator attack impacts and the year-by-year \
         frequency trend for the `{}` case with the `{}` charging fleet.",
        case.name, fleet.name
    )?;

    // Branch loadings per fleet snapshot.
    let snapshots: [(&str, Option<f64>); 4] = [
        ("base", None),
        ("2022", Some(2022.0)),
        ("2030", Some(2030.0)),
        ("2050", Some(2050.0)),
    ];
    let mut columns = Vec::new();
    for (label, year) in &snapshots {
        let (_, loadings) =
            snapshot_flow(&case, &fleet, *year, &OperatorSelection::All, cli.pf)
                .with_context(|| format!("solving the {label} snapshot"))?;
        columns.push((*label, loadings));
    }
    writeln!(md)?;
    writeln!(md, "## Branch loading by fleet year (% of rating)")?;
    writeln!(md)?;
    writeln!(
        md,
        "Loadings above 100% are marked **bold**. `base` is the case without \
         any charging fleet connected."
    )?;
    writeln!(md)?;
    writeln!(md, "| Branch | base | 2022 | 2030 | 2050 |")?;
    writeln!(md, "| --- | --- | --- | --- | --- |")?;
    for (j, br) in case.branches.iter().enumerate() {
        let mut row = format!("| {}-{} |", br.from, br.to);
        for (_, loadings) in &columns {
            let pct = loadings[j].loading_pct;
            if pct > 100.0 {
                write!(row, " **{pct:.1}** |")?;
            } else {
                write!(row, " {pct:.1} |")?;
            }
        }
        writeln!(md, "{row}")?;
    }

    // Per-operator attack impacts.
    let template = AttackScenario {
        name: "report".to_string(),
        year: 2030.0,
        power_factor: cli.pf,
        ..AttackScenario::default()
    };
    let impacts =
        attack::per_operator_sweep(&case, &fleet, &template).context("sweeping operators")?;
    writeln!(md)?;
    writeln!(md, "## Attacks per charging operator, fleet year 2030")?;
    writeln!(md)?;
    writeln!(
        md,
        "Each operator's whole 2030 fleet disconnects at t = {} s.",
        template.t_attack_s
    )?;
    writeln!(md)?;
    writeln!(md, "| Operator | Power dropped (MW) | Peak (Hz) | Steady (Hz) |")?;
    writeln!(md, "| --- | --- | --- | --- |")?;
    for i in &impacts {
        writeln!(
            md,
            "| {} | {:.1} | {:.3} | {:.3} |",
            i.operator, i.attack_mw, i.peak_freq_hz, i.steady_freq_hz
        )?;
    }

    // Year-by-year trend.
    let rows = year_sweep(&case, &fleet, &template)?;
    writeln!(md)?;
    writeln!(md, "## Peak and steady frequency by fleet year")?;
    writeln!(md)?;
    writeln!(
        md,
        "Full shutdown of the whole fleet and of the largest operator alone, \
         per projection year."
    )?;
    writeln!(md)?;
    writeln!(
        md,
        "| Year | Peak, all (Hz) | Steady, all (Hz) | Peak, largest (Hz) | Steady, largest (Hz) |"
    )?;
    writeln!(md, "| --- | --- | --- | --- | --- |")?;
    for year in SWEEP_YEARS {
        let all = rows
            .iter()
            .find(|(y, s, _)| *y == year && *s == "all")
            .expect("row exists");
        let tesla = rows
            .iter()
            .find(|(y, s, _)| *y == year && *s == "tesla")
            .expect("row exists");
        writeln!(
            md,
            "| {} | {:.3} | {:.3} | {:.3} | {:.3} |",
            year,
            all.2.peak_freq_hz,
            all.2.steady_freq_hz,
            tesla.2.peak_freq_hz,
            tesla.2.steady_freq_hz
        )?;
    }

    let md_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cli.out_dir.join("report.md"));
    artifacts::write_text(&md_path, &md)?;
    artifacts::write_manifest(
        &cli.out_dir,
        "report",
        &[("case", cli.case.as_path()), ("fleet", cli.fleet.as_path())],
        None,
    )?;
    if !cli.quiet {
        println!("report written to {}", md_path.display());
    }
    Ok(())
}
