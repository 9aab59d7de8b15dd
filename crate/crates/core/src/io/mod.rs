//! Scenario files and result tables.

mod output;
mod scenario;

pub use output::{
    format_number, read_route_flows, write_arc_flows, write_conformance, write_gap_trace, write_route_flows,
    write_route_times, RunSummary,
};
pub use scenario::{parse_scenario, parse_scenario_str, write_scenario, Scenario, SCENARIO_FORMAT};
