//! Grid data model: buses, branches, generators, and the admittance matrix.
//!
//! A [`GridCase`] is the static description of a network on a common MVA base.
//! Loading one from disk runs the full validation pass, so every other module
//! can assume ids are contiguous, the network is connected, and exactly one
//! slack bus exists.

mod parse;
mod ybus;

pub use parse::{load_grid_case, parse_grid_case, write_grid_case};
pub use ybus::{build_ybus, AdmittanceMatrix};

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// One-based bus identifier as printed in the case file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BusId(pub usize);

impl BusId {
    /// Zero-based position in the case's bus list.
    pub fn index(self) -> usize {
        self.0 - 1
    }
}

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

impl fmt::Display for BusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BusKind::Slack => "slack",
            BusKind::Pv => "pv",
            BusKind::Pq => "pq",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: BusId,
    pub name: String,
    pub nominal_kv: f64,
    pub kind: BusKind,
    pub load_p_mw: f64,
    pub load_q_mvar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    Line,
    Transformer,
}

impl fmt::Display for BranchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BranchKind::Line => "line",
            BranchKind::Transformer => "transformer",
        };
        f.write_str(s)
    }
}

/// Series branch between two buses. Impedances are per unit on the system base.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: BusId,
    pub to: BusId,
    pub resistance_pu: f64,
    pub reactance_pu: f64,
    pub rating_mva: f64,
    pub kind: BranchKind,
    pub side_kv: (f64, f64),
}

/// Synchronous machine with a first-order governor, attached to one bus.
///
/// `inertia_h_s`, `droop_r_pu`, `damping_d_pu`, and `xd_transient_pu` are on the
/// machine's own `capacity_mva` base.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: BusId,
    pub p_set_mw: f64,
    pub capacity_mva: f64,
    pub inertia_h_s: f64,
    pub droop_r_pu: f64,
    pub governor_tc_s: f64,
    pub damping_d_pu: f64,
    pub xd_transient_pu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("validation: {0}")]
    Validation(String),
    #[error("base power must be positive, got {0}")]
    NonPositiveBase(f64),
}

impl GridCase {
    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.buses.get(id.index())
    }

    pub fn slack_bus(&self) -> BusId {
        self.buses
            .iter()
            .find(|b| b.kind == BusKind::Slack)
            .map(|b| b.id)
            .expect("validated case has a slack bus")
    }

    pub fn generators_at(&self, bus: BusId) -> impl Iterator<Item = &Generator> {
        self.generators.iter().filter(move |g| g.bus == bus)
    }

    pub fn total_load_p_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.load_p_mw).sum()
    }

    /// Full structural validation. Every loader calls this before returning.
    pub fn validate(&self) -> Result<(), GridError> {
        if self.base_mva <= 0.0 {
            return Err(GridError::NonPositiveBase(self.base_mva));
        }
        if self.buses.is_empty() {
            return Err(GridError::Validation("case has no buses".into()));
        }
        for (i, bus) in self.buses.iter().enumerate() {
            if bus.id.0 != i + 1 {
                return Err(GridError::Validation(format!(
                    "bus ids must be contiguous from 1: expected {} at position {}, found {}",
                    i + 1,
                    i + 1,
                    bus.id
                )));
            }
            if bus.load_p_mw < 0.0 {
                return Err(GridError::Validation(format!(
                    "bus {}: negative active load {} MW",
                    bus.id, bus.load_p_mw
                )));
            }
            if bus.nominal_kv <= 0.0 {
                return Err(GridError::Validation(format!(
                    "bus {}: nominal voltage must be positive",
                    bus.id
                )));
            }
        }
        let slacks: Vec<BusId> = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .map(|b| b.id)
            .collect();
        if slacks.len() != 1 {
            let ids: Vec<String> = slacks.iter().map(|id| id.to_string()).collect();
            return Err(GridError::Validation(format!(
                "expected exactly one slack bus, found {} ({})",
                slacks.len(),
                if ids.is_empty() {
                    "none".to_string()
                } else {
                    ids.join(", ")
                }
            )));
        }
        let n = self.buses.len();
        for (i, br) in self.branches.iter().enumerate() {
            let label = format!("branch {} ({}-{})", i + 1, br.from, br.to);
            if br.from.0 == 0 || br.from.0 > n || br.to.0 == 0 || br.to.0 > n {
                return Err(GridError::Validation(format!(
                    "{label}: endpoint bus does not exist"
                )));
            }
            if br.from == br.to {
                return Err(GridError::Validation(format!(
                    "{label}: both ends on the same bus"
                )));
            }
            if br.resistance_pu < 0.0 {
                return Err(GridError::Validation(format!(
                    "{label}: negative resistance"
                )));
            }
            if br.reactance_pu <= 0.0 {
                return Err(GridError::Validation(format!(
                    "{label}: reactance must be positive"
                )));
            }
            if br.rating_mva <= 0.0 {
                return Err(GridError::Validation(format!(
                    "{label}: rating must be positive, got {}",
                    br.rating_mva
                )));
            }
        }
        for (i, gen) in self.generators.iter().enumerate() {
            let label = format!("generator {} at bus {}", i + 1, gen.bus);
            if gen.bus.0 == 0 || gen.bus.0 > n {
                return Err(GridError::Validation(format!("{label}: bus does not exist")));
            }
            let kind = self.buses[gen.bus.index()].kind;
            if kind == BusKind::Pq {
                return Err(GridError::Validation(format!(
                    "{label}: generators belong on slack or pv buses, bus {} is pq",
                    gen.bus
                )));
            }
            if gen.p_set_mw < 0.0 || gen.p_set_mw > gen.capacity_mva {
                return Err(GridError::Validation(format!(
                    "{label}: p_set {} MW outside [0, capacity {} MVA]",
                    gen.p_set_mw, gen.capacity_mva
                )));
            }
            if gen.capacity_mva <= 0.0
                || gen.inertia_h_s <= 0.0
                || gen.droop_r_pu <= 0.0
                || gen.governor_tc_s <= 0.0
                || gen.xd_transient_pu <= 0.0
            {
                return Err(GridError::Validation(format!(
                    "{label}: capacity, inertia, droop, governor time constant, and \
                     transient reactance must all be positive"
                )));
            }
            if gen.damping_d_pu < 0.0 {
                return Err(GridError::Validation(format!(
                    "{label}: damping must be non-negative"
                )));
            }
        }
        for bus in &self.buses {
            if bus.kind != BusKind::Pq && self.generators_at(bus.id).next().is_none() {
                return Err(GridError::Validation(format!(
                    "bus {} is {} but has no generator",
                    bus.id, bus.kind
                )));
            }
        }
        self.check_connected()?;
        self.check_slack_coverage()?;
        Ok(())
    }

    /// Breadth-first reachability over the branch list.
    fn check_connected(&self) -> Result<(), GridError> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in &self.branches {
            adj[br.from.index()].push(br.to.index());
            adj[br.to.index()].push(br.from.index());
        }
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        let unreachable: Vec<String> = seen
            .iter()
            .enumerate()
            .filter(|(_, s)| !**s)
            .map(|(i, _)| (i + 1).to_string())
            .collect();
        if unreachable.is_empty() {
            Ok(())
        } else {
            Err(GridError::Validation(format!(
                "network is not connected: buses {{{}}} unreachable from bus 1",
                unreachable.join(", ")
            )))
        }
    }

    /// The slack machine must be able to cover the gap between total load and
    /// the dispatch of the other generators (losses ride on the same margin).
    fn check_slack_coverage(&self) -> Result<(), GridError> {
        let slack = self.slack_bus();
        let slack_capacity: f64 = self
            .generators_at(slack)
            .map(|g| g.capacity_mva)
            .sum::<f64>();
        let other_dispatch: f64 = self
            .generators
            .iter()
            .filter(|g| g.bus != slack)
            .map(|g| g.p_set_mw)
            .sum();
        let required = self.total_load_p_mw() - other_dispatch;
        if required > slack_capacity || required < -slack_capacity {
            return Err(GridError::Validation(format!(
                "slack bus {} must supply {:.1} MW but its capacity is {:.1} MVA",
                slack, required, slack_capacity
            )));
        }
        Ok(())
    }

    /// Bus ids carrying nonzero base load, ascending.
    pub fn load_buses(&self) -> BTreeSet<BusId> {
        self.buses
            .iter()
            .filter(|b| b.load_p_mw > 0.0)
            .map(|b| b.id)
            .collect()
    }
}

/// Converts an MW/Mvar/MVA quantity to per unit on `base_mva`.
pub fn to_per_unit(value_mva: f64, base_mva: f64) -> Result<f64, GridError> {
    if base_mva <= 0.0 {
        return Err(GridError::NonPositiveBase(base_mva));
    }
    Ok(value_mva / base_mva)
}

/// Converts a per-unit quantity back to MW/Mvar/MVA on `base_mva`.
pub fn from_per_unit(value_pu: f64, base_mva: f64) -> Result<f64, GridError> {
    if base_mva <= 0.0 {
        return Err(GridError::NonPositiveBase(base_mva));
    }
    Ok(value_pu * base_mva)
}
