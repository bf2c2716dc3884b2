//! Reader and writer for the grid case file format.
//!
//! See `datasets/manhattan12/grid.dat` for a commented example. The file has a
//! preamble (`name`, `base_mva`) and three sections: `[bus]` rows of
//! `id name kv kind load_p_mw load_q_mvar`, `[branch]` rows of
//! `from to r_pu x_pu rating_mva kind kv_from kv_to`, and `[generator]` rows of
//! `bus p_set_mw capacity_mva inertia_h_s droop_r_pu governor_tc_s damping_d_pu
//! xd_transient_pu`.

use std::fmt::Write as _;
use std::path::Path;

use super::{Branch, BranchKind, Bus, BusId, BusKind, Generator, GridCase, GridError};
use crate::textfmt::{quote_field, Document, Row};

pub fn load_grid_case(path: impl AsRef<Path>) -> Result<GridCase, GridError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GridError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_grid_case(&text, &path.display().to_string())
}

/// Parses and validates a case. `origin` labels errors (usually the file path).
pub fn parse_grid_case(text: &str, origin: &str) -> Result<GridCase, GridError> {
    let doc = Document::parse(text).map_err(|e| GridError::Parse {
        path: origin.to_string(),
        line: e.line,
        message: e.message,
    })?;
    let fail = |line: usize, message: String| GridError::Parse {
        path: origin.to_string(),
        line,
        message,
    };

    let name = doc.preamble_value("name").unwrap_or("unnamed").to_string();
    let base_mva = match doc.preamble.iter().find(|kv| kv.key == "base_mva") {
        Some(kv) => parse_f64(&kv.value, "base_mva").map_err(|m| fail(kv.line, m))?,
        None => return Err(fail(1, "missing `base_mva` in preamble".into())),
    };

    let bus_section = doc
        .section("bus")
        .ok_or_else(|| fail(1, "missing [bus] section".into()))?;
    let mut buses = Vec::new();
    for row in &bus_section.rows {
        buses.push(parse_bus(row).map_err(|m| fail(row.line, m))?);
    }

    let branch_section = doc
        .section("branch")
        .ok_or_else(|| fail(1, "missing [branch] section".into()))?;
    let mut branches = Vec::new();
    for row in &branch_section.rows {
        branches.push(parse_branch(row).map_err(|m| fail(row.line, m))?);
    }

    let mut generators = Vec::new();
    if let Some(gen_section) = doc.section("generator") {
        for row in &gen_section.rows {
            generators.push(parse_generator(row).map_err(|m| fail(row.line, m))?);
        }
    }

    let case = GridCase {
        name,
        base_mva,
        buses,
        branches,
        generators,
    };
    case.validate()?;
    Ok(case)
}

fn expect_fields(row: &Row, n: usize, what: &str) -> Result<(), String> {
    if row.fields.len() != n {
        return Err(format!(
            "{what} row needs {n} fields, found {}",
            row.fields.len()
        ));
    }
    Ok(())
}

fn parse_f64(s: &str, what: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .map_err(|_| format!("{what}: `{s}` is not a number"))
}

fn parse_usize(s: &str, what: &str) -> Result<usize, String> {
    s.parse::<usize>()
        .map_err(|_| format!("{what}: `{s}` is not a positive integer"))
}

fn parse_bus(row: &Row) -> Result<Bus, String> {
    expect_fields(row, 6, "bus")?;
    let f = &row.fields;
    let kind = match f[3].as_str() {
        "slack" => BusKind::Slack,
        "pv" => BusKind::Pv,
        "pq" => BusKind::Pq,
        other => return Err(format!("bus kind `{other}` is not slack/pv/pq")),
    };
    Ok(Bus {
        id: BusId(parse_usize(&f[0], "bus id")?),
        name: f[1].clone(),
        nominal_kv: parse_f64(&f[2], "bus kv")?,
        kind,
        load_p_mw: parse_f64(&f[4], "load_p_mw")?,
        load_q_mvar: parse_f64(&f[5], "load_q_mvar")?,
    })
}

fn parse_branch(row: &Row) -> Result<Branch, String> {
    expect_fields(row, 8, "branch")?;
    let f = &row.fields;
    let kind = match f[5].as_str() {
        "line" => BranchKind::Line,
        "transformer" => BranchKind::Transformer,
        other => return Err(format!("branch kind `{other}` is not line/transformer")),
    };
    Ok(Branch {
        from: BusId(parse_usize(&f[0], "branch from")?),
        to: BusId(parse_usize(&f[1], "branch to")?),
        resistance_pu: parse_f64(&f[2], "r_pu")?,
        reactance_pu: parse_f64(&f[3], "x_pu")?,
        rating_mva: parse_f64(&f[4], "rating_mva")?,
        kind,
        side_kv: (
            parse_f64(&f[6], "kv_from")?,
            parse_f64(&f[7], "kv_to")?,
        ),
    })
}

fn parse_generator(row: &Row) -> Result<Generator, String> {
    expect_fields(row, 8, "generator")?;
    let f = &row.fields;
    Ok(Generator {
        bus: BusId(parse_usize(&f[0], "generator bus")?),
        p_set_mw: parse_f64(&f[1], "p_set_mw")?,
        capacity_mva: parse_f64(&f[2], "capacity_mva")?,
        inertia_h_s: parse_f64(&f[3], "inertia_h_s")?,
        droop_r_pu: parse_f64(&f[4], "droop_r_pu")?,
        governor_tc_s: parse_f64(&f[5], "governor_tc_s")?,
        damping_d_pu: parse_f64(&f[6], "damping_d_pu")?,
        xd_transient_pu: parse_f64(&f[7], "xd_transient_pu")?,
    })
}

/// Serializes a case in the same format `parse_grid_case` reads.
///
/// Floats are printed with Rust's shortest round-trip formatting, so a
/// load → write → load cycle reproduces the structure exactly.
pub fn write_grid_case(case: &GridCase) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "name = {}", case.name);
    let _ = writeln!(out, "base_mva = {}", case.base_mva);
    let _ = writeln!(out);
    let _ = writeln!(out, "[bus]");
    let _ = writeln!(out, "# id  name  kv  kind  load_p_mw  load_q_mvar");
    for b in &case.buses {
        let _ = writeln!(
            out,
            "{}  {}  {}  {}  {}  {}",
            b.id,
            quote_field(&b.name),
            b.nominal_kv,
            b.kind,
            b.load_p_mw,
            b.load_q_mvar
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "[branch]");
    let _ = writeln!(
        out,
        "# from  to  r_pu  x_pu  rating_mva  kind  kv_from  kv_to"
    );
    for br in &case.branches {
        let _ = writeln!(
            out,
            "{}  {}  {}  {}  {}  {}  {}  {}",
            br.from,
            br.to,
            br.resistance_pu,
            br.reactance_pu,
            br.rating_mva,
            br.kind,
            br.side_kv.0,
            br.side_kv.1
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "[generator]");
    let _ = writeln!(
        out,
        "# bus  p_set_mw  capacity_mva  inertia_h_s  droop_r_pu  governor_tc_s  damping_d_pu  xd_transient_pu"
    );
    for g in &case.generators {
        let _ = writeln!(
            out,
            "{}  {}  {}  {}  {}  {}  {}  {}",
            g.bus,
            g.p_set_mw,
            g.capacity_mva,
            g.inertia_h_s,
            g.droop_r_pu,
            g.governor_tc_s,
            g.damping_d_pu,
            g.xd_transient_pu
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
name = mini
base_mva = 100.0

[bus]
1 source 138.0 slack 0.0 0.0
2 sink 138.0 pq 50.0 10.0

[branch]
1 2 0.01 0.1 120.0 line 138.0 138.0

[generator]
1 0.0 200.0 4.0 0.05 1.0 0.0 0.3
";

    #[test]
    fn parses_minimal_case() {
        let case = parse_grid_case(MINIMAL, "mini.dat").unwrap();
        assert_eq!(case.buses.len(), 2);
        assert_eq!(case.branches[0].reactance_pu, 0.1);
        assert_eq!(case.buses[1].load_p_mw, 50.0);
        assert_eq!(case.generators[0].capacity_mva, 200.0);
    }

    #[test]
    fn unknown_branch_bus_names_line() {
        let bad = MINIMAL.replace("1 2 0.01", "1 7 0.01");
        let err = parse_grid_case(&bad, "mini.dat").unwrap_err().to_string();
        assert!(err.contains("does not exist"), "{err}");
    }

    #[test]
    fn bad_number_reports_line_and_field() {
        let bad = MINIMAL.replace("0.01 0.1", "0.01 abc");
        let err = parse_grid_case(&bad, "mini.dat").unwrap_err().to_string();
        assert!(err.contains("mini.dat:9"), "{err}");
        assert!(err.contains("x_pu"), "{err}");
    }

    #[test]
    fn round_trip_is_identical() {
        let case = parse_grid_case(MINIMAL, "mini.dat").unwrap();
        let text = write_grid_case(&case);
        let again = parse_grid_case(&text, "rt.dat").unwrap();
        assert_eq!(case, again);
    }
}
