//! Steady-state and transient simulation of a small urban transmission grid
//! under coordinated demand-side load attacks.
//!
//! The crate is organised around one question: what happens to a city-scale
//! grid when a large block of controllable load — here, electric-vehicle
//! charging — switches off or on at once? The modules build on each other:
//!
//! * [`grid`] — case model (buses, branches, generators), a plain-text case
//!   format, validation, and the bus admittance matrix.
//! * [`powerflow`] — Newton–Raphson AC power flow and branch loading.
//! * [`dynamics`] — classical-machine transient simulation with governor
//!   response, driven by timed load-step events.
//! * [`protection`] — frequency/voltage/overload relay scans over a transient
//!   trace and a coarse blackout verdict.
//! * [`attack`] — charging-fleet data, year interpolation, attack scenarios,
//!   and search helpers (minimum attack power, per-operator sweeps).
//!
//! Conventions used throughout: quantities are in MW/Mvar/MVA on the case
//! base unless a name says `_pu`; buses are identified by their 1-based
//! [`grid::BusId`] and vectors over buses follow case order.

pub mod attack;
pub mod dynamics;
pub mod grid;
mod linalg;
pub mod powerflow;
pub mod protection;
pub mod textfmt;
