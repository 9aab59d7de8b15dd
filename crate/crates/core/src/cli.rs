//! Batch command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::arc::check_assumptions;
use crate::equilibrium::{
    solve_departure_choice, solve_wardrop, wardrop_gap, EquilibriumState, SolverConfig, StepRule,
};
use crate::error::{Error, Result};
use crate::io::{
    parse_scenario, read_route_flows, write_arc_flows, write_conformance, write_gap_trace, write_route_flows,
    write_route_times, RunSummary, Scenario,
};
use crate::loading::{load_with, route_times, LoadOptions};
use crate::measure::CumulativeFlow;
use crate::network::RouteFlowPattern;
use crate::oracle::{oracle_equilibrium, oracle_load, GridConfig};

/// Exit code for a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit code for failures other than validation.
pub const EXIT_FAILURE: i32 = 1;
/// Exit code for unreadable or invalid input.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code when `--strict` is set and the solver missed its tolerance.
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dynwardrop", version, about = "Dynamic network loading and dynamic Wardrop equilibria")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load the scenario's demand, split evenly over each pair's routes.
    Load(Common),
    /// Route-choice equilibrium for the scenario's demand.
    Solve(Common),
    /// Route and departure-time equilibrium for the scenario's classes.
    SolveDtc(Common),
    /// Probe every arc model against the modelling assumptions.
    Check {
        #[command(flatten)]
        common: Common,
        /// Random probes per assumption.
        #[arg(long, default_value_t = 200)]
        probes: usize,
    },
    /// Load with the particle oracle at three grid steps and compare with the exact loader.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Route flows to load instead of the even split (as written by `solve`).
        #[arg(long)]
        flows: Option<PathBuf>,
        /// Also compute the oracle's own equilibrium.
        #[arg(long)]
        equilibrium: bool,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file.
    scenario: PathBuf,
    /// Loading frontier step (`load`) or oracle grid step (`oracle`).
    #[arg(long)]
    dt: Option<f64>,
    /// Number of departure bins over the horizon.
    #[arg(long)]
    bins: Option<usize>,
    /// Gap (or regret) tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap (pair-balancing rounds for the oracle equilibrium).
    #[arg(long)]
    max_iters: Option<usize>,
    /// Seed for randomised probes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Exit with status 3 when the tolerance is not met.
    #[arg(long)]
    strict: bool,
    /// Update rule between iterations.
    #[arg(long, value_enum)]
    rule: Option<Rule>,
    /// Step size or rate used by `fixed`, `swap` and `extragradient`.
    #[arg(long)]
    rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Rule {
    Msa,
    Fixed,
    Swap,
    Extragradient,
    Marching,
}

impl Common {
    fn solver_config(&self, scenario: &Scenario, default_rule: Rule) -> Result<SolverConfig> {
        let defaults = SolverConfig::default();
        let bin_width = match self.bins {
            Some(0) => return Err(Error::Config("--bins must be positive".into())),
            Some(n) => Some(scenario.horizon.end() / n as f64),
            None => None,
        };
        let step_rule = match self.rule.unwrap_or(default_rule) {
            Rule::Msa => StepRule::Msa,
            Rule::Fixed => StepRule::Fixed(self.rate.unwrap_or(0.1)),
            Rule::Swap => StepRule::Swap(self.rate.unwrap_or(5.0)),
            Rule::Extragradient => StepRule::Extragradient(self.rate.unwrap_or(10.0)),
            Rule::Marching => StepRule::Marching,
        };
        Ok(SolverConfig {
            bin_width,
            max_iterations: self.max_iters.unwrap_or(defaults.max_iterations),
            tolerance: self.tol.unwrap_or(defaults.tolerance),
            step_rule,
            ..defaults
        })
    }

    fn summary(&self, command: &str) -> RunSummary {
        RunSummary {
            command: command.into(),
            scenario: self.scenario.display().to_string(),
            status: "ok".into(),
            seed: Some(self.seed),
            ..RunSummary::default()
        }
    }
}

/// Each pair's demand divided equally among its routes.
fn even_split(scenario: &Scenario) -> RouteFlowPattern {
    let network = &scenario.network;
    let mut parts: Vec<Vec<CumulativeFlow>> = vec![Vec::new(); network.routes().len()];
    for e in scenario.demand.entries() {
        let routes = network.routes_between(&e.origin, &e.destination);
        for &r in &routes {
            parts[r].push(e.flow.scaled(1.0 / routes.len() as f64));
        }
    }
    RouteFlowPattern::new(parts.iter().map(|p| CumulativeFlow::sum(p.iter())).collect())
}

fn write_state(out: &Path, scenario: &Scenario, state: &EquilibriumState) -> Result<()> {
    let bundle = load_with(&scenario.network, &state.flows, LoadOptions::default())?;
    write_route_flows(&out.join("route_flows.csv"), &scenario.network, &state.flows)?;
    write_route_times(&out.join("route_times.csv"), &scenario.network, &state.times)?;
    write_arc_flows(&out.join("arc_flows.csv"), &scenario.network, &bundle, scenario.horizon.end())?;
    write_gap_trace(&out.join("gap_trace.csv"), &state.gap_trace)
}

/// Outcome of a command: its summary and whether it met its tolerance.
struct Outcome {
    summary: RunSummary,
    converged: bool,
}

fn solved(mut summary: RunSummary, state: &EquilibriumState, tolerance: f64) -> Outcome {
    summary.iterations = Some(state.iteration);
    summary.gap = Some(state.gap);
    summary.converged = Some(state.converged);
    summary.tolerance = Some(tolerance);
    summary.bin_width = Some(state.bin_width);
    if !state.converged {
        summary.status = "not_converged".into();
    }
    Outcome { summary, converged: state.converged }
}

fn run(command: &Command) -> Result<(Outcome, bool, PathBuf)> {
    let common = match command {
        Command::Load(c) | Command::Solve(c) | Command::SolveDtc(c) => c,
        Command::Check { common, .. } | Command::Oracle { common, .. } => common,
    };
    let scenario = parse_scenario(&common.scenario)?;
    std::fs::create_dir_all(&common.out)?;
    let out = common.out.as_path();
    let network = &scenario.network;
    let outcome = match command {
        Command::Load(c) => {
            let mut summary = c.summary("load");
            let flows = even_split(&scenario);
            let bundle = load_with(network, &flows, LoadOptions { frontier_step: c.dt })?;
            let times = route_times(network, &bundle, scenario.horizon);
            write_route_flows(&out.join("route_flows.csv"), network, &flows)?;
            write_route_times(&out.join("route_times.csv"), network, &times)?;
            write_arc_flows(&out.join("arc_flows.csv"), network, &bundle, scenario.horizon.end())?;
            summary.metrics.insert("frontier_steps".into(), bundle.steps() as f64);
            summary.metrics.insert("total_demand".into(), flows.total());
            Outcome { summary, converged: true }
        }
        Command::Solve(c) => {
            if scenario.demand.entries().is_empty() {
                return Err(Error::Validation("scenario has no [[demand]] rows to assign".into()));
            }
            let config = c.solver_config(&scenario, Rule::Msa)?;
            let state = solve_wardrop(network, &scenario.demand, &config)?;
            write_state(out, &scenario, &state)?;
            solved(c.summary("solve"), &state, config.tolerance)
        }
        Command::SolveDtc(c) => {
            if scenario.classes.is_empty() {
                return Err(Error::Validation("scenario has no [[classes]] for departure-time choice".into()));
            }
            let config = c.solver_config(&scenario, Rule::Marching)?;
            let state = solve_departure_choice(network, &scenario.classes, scenario.horizon, &config)?;
            write_state(out, &scenario, &state)?;
            let bundle = load_with(network, &state.flows, LoadOptions::default())?;
            let mut outcome = solved(c.summary("solve-dtc"), &state, config.tolerance);
            for (r, route) in network.routes().iter().enumerate() {
                if let Some(mean) = bundle.route_exit(r).mean_time() {
                    outcome.summary.metrics.insert(format!("mean_arrival.{}", route.id), mean);
                }
            }
            outcome
        }
        Command::Check { common: c, probes } => {
            let mut summary = c.summary("check");
            let reports: Vec<_> = network
                .arcs()
                .iter()
                .map(|a| check_assumptions(&a.model, *probes, c.seed, scenario.horizon.end()))
                .collect();
            write_conformance(&out.join("conformance.csv"), network, &reports)?;
            let mut failed = 0;
            for (arc, report) in network.arcs().iter().zip(&reports) {
                for check in &report.checks {
                    let verdict = if check.passed { "pass" } else { "FAIL" };
                    println!("{} ({}): {} {verdict}", arc.id, arc.model.kind(), check.assumption.name());
                    failed += usize::from(!check.passed);
                }
            }
            summary.metrics.insert("failed_checks".into(), failed as f64);
            Outcome { summary, converged: true }
        }
        Command::Oracle { common: c, flows, equilibrium } => {
            let mut summary = c.summary("oracle");
            let x = match flows {
                Some(path) => read_route_flows(path, network)?,
                None => even_split(&scenario),
            };
            let bundle = load_with(network, &x, LoadOptions::default())?;
            let times = route_times(network, &bundle, scenario.horizon);
            if x.total() > 0.0 {
                summary.gap = Some(wardrop_gap(network, &x, &times)?);
            }
            let grid = c.dt.map_or_else(|| GridConfig::coarsest(network), |step| GridConfig { step });
            let fine = grid.step / 4.0;
            let end = bundle_end(&bundle, network.arcs().len()).max(scenario.horizon.end());
            let samples: Vec<f64> = (0..=((end + 1.0) / fine).ceil() as usize).map(|k| k as f64 * fine).collect();
            let mut distances = Vec::new();
            for refine in [1.0, 2.0, 4.0] {
                let g = GridConfig { step: grid.step / refine };
                let o = oracle_load(network, &x, g)?;
                distances.push(o.distance(&bundle, network.routes().len(), &samples));
            }
            for (name, d) in ["distance_step", "distance_half_step", "distance_quarter_step"].iter().zip(&distances) {
                summary.metrics.insert((*name).into(), *d);
            }
            summary.metrics.insert("grid_step".into(), grid.step);
            let monotone = distances[1] <= distances[0] + 1e-12 && distances[2] <= distances[1] + 1e-12;
            summary.metrics.insert("monotone".into(), if monotone { 1.0 } else { 0.0 });
            if *equilibrium {
                let eq = oracle_equilibrium(network, &scenario.demand, grid, c.max_iters.unwrap_or(1))?;
                write_route_flows(&out.join("oracle_route_flows.csv"), network, &eq.flows)?;
                summary.metrics.insert("oracle_equilibrium_gap".into(), eq.gap);
                summary.bin_width = Some(eq.bin_width);
            }
            Outcome { summary, converged: true }
        }
    };
    Ok((outcome, common.strict, common.out.clone()))
}

/// Last breakpoint of any arc outflow.
fn bundle_end(bundle: &crate::loading::ArcFlowBundle, arcs: usize) -> f64 {
    (0..arcs).filter_map(|a| bundle.outflow(a).support().map(|s| s.1)).fold(0.0, f64::max)
}

/// Exit status for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. }
        | Error::Validation(_)
        | Error::NoRoute { .. }
        | Error::ModelParameter(_)
        | Error::InvalidFlow(_)
        | Error::Config(_)
        | Error::InstanceTooLarge(_) => EXIT_VALIDATION,
        _ => EXIT_FAILURE,
    }
}

/// Runs the command line `args` (program name first) and returns the process exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let start = Instant::now();
    match run(&cli.command) {
        Ok((mut outcome, strict, out)) => {
            outcome.summary.runtime_seconds = start.elapsed().as_secs_f64();
            if let Err(e) = outcome.summary.write(&out.join("summary.toml")) {
                eprintln!("error: {e}");
                return exit_code(&e);
            }
            let s = &outcome.summary;
            match s.gap {
                Some(g) => println!("{}: {} (gap {g:e}) -> {}", s.command, s.status, out.display()),
                None => println!("{}: {} -> {}", s.command, s.status, out.display()),
            }
            if strict && !outcome.converged {
                eprintln!("error: tolerance not met");
                EXIT_NOT_CONVERGED
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
