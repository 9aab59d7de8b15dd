//! Route and departure-time equilibria by successive averages.

mod demand;
mod gap;
mod solver;

pub use demand::{ChoiceMode, DemandTable, OdDemand, UserClass};
pub use gap::{scheduling_utility, wardrop_gap, GAP_QUADRATURE};
pub use solver::{
    induced_flows, solve_departure_choice, solve_departure_choice_observed, solve_wardrop, solve_wardrop_observed,
    EquilibriumState, GroupSplit, SolverConfig, StepRule, DEFAULT_BINS,
};
