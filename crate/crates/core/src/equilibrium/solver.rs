use super::demand::{ChoiceMode, DemandTable, UserClass};
use super::gap::{scheduling_utility, wardrop_gap};
use crate::arc::TravelTimeModel;
use crate::error::{Error, Result};
use crate::loading::{load, route_arrival, route_times, TravelTimePattern};
use crate::measure::{CumulativeFlow, Horizon};
use crate::network::{Network, RouteFlowPattern};

/// Averaging step between the current split and the best response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `1 / (n + 1)` at iteration `n`.
    Msa,
    Fixed(f64),
    /// Pairwise swaps: each cell sends `rate * (u_j - u_i)^+` of its share to every better
    /// cell `j` of the same choice set, instead of averaging with the best response.
    Swap(f64),
    /// Projected extragradient: a trial step `p + s u` projected on the choice simplex,
    /// then the same step from `p` using the utilities at the trial point.
    Extragradient(f64),
    /// Departure-choice classes only: walk the bins in departure order, filling each with
    /// the mass that brings its utility down to a common level, and search that level so
    /// the class mass is used up. Exact when later departures cannot delay earlier ones.
    Marching,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Departure-bin width; `None` splits the horizon into 64 bins.
    pub bin_width: Option<f64>,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub step_rule: StepRule,
    /// Alternatives within this much of the best are treated as tied.
    pub tie_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { bin_width: None, max_iterations: 200, tolerance: 1e-3, step_rule: StepRule::Msa, tie_tolerance: 1e-12 }
    }
}

pub const DEFAULT_BINS: usize = 64;

/// Midpoints per bin when averaging utilities over a departure bin.
const UTILITY_QUADRATURE: usize = 8;

impl SolverConfig {
    /// Number of bins and their width on `horizon`.
    pub fn bins(&self, horizon: Horizon) -> Result<(usize, f64)> {
        let h = horizon.end();
        let w = self.bin_width.unwrap_or(h / DEFAULT_BINS as f64);
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::Config(format!("bin width must be positive, got {w}")));
        }
        let n = (h / w).round();
        if n < 1.0 || (n * w - h).abs() > 1e-9 * (1.0 + h) {
            return Err(Error::Config(format!("bin width {w} does not divide the horizon {h}")));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("gap tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max iterations must be at least 1".into()));
        }
        if !(self.tie_tolerance >= 0.0) {
            return Err(Error::Config("tie tolerance must be nonnegative".into()));
        }
        match self.step_rule {
            StepRule::Fixed(s) if !(s > 0.0 && s <= 1.0) => {
                return Err(Error::Config(format!("fixed step must lie in ]0, 1], got {s}")));
            }
            StepRule::Swap(r) | StepRule::Extragradient(r) if !(r > 0.0 && r.is_finite()) => {
                return Err(Error::Config(format!("step rate must be positive, got {r}")));
            }
            _ => {}
        }
        Ok((n as usize, h / n))
    }

    fn step(&self, iteration: usize) -> f64 {
        match self.step_rule {
            StepRule::Msa => 1.0 / (iteration as f64 + 1.0),
            StepRule::Fixed(s) => s,
            StepRule::Swap(_) | StepRule::Extragradient(_) | StepRule::Marching => 0.0,
        }
    }
}

/// Choice probabilities of one demand group (an origin-destination pair or a user class).
///
/// `shares[bin][k]` refers to `routes[k]`. Without departure choice each bin's row sums to
/// one; with departure choice the whole table sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSplit {
    pub origin: String,
    pub destination: String,
    pub routes: Vec<usize>,
    pub departure_choice: bool,
    pub shares: Vec<Vec<f64>>,
}

impl GroupSplit {
    fn uniform(origin: &str, destination: &str, routes: Vec<usize>, bins: usize, joint: bool) -> Self {
        let cells = if joint { bins * routes.len() } else { routes.len() };
        let p = 1.0 / cells as f64;
        Self {
            origin: origin.into(),
            destination: destination.into(),
            shares: vec![vec![p; routes.len()]; bins],
            routes,
            departure_choice: joint,
        }
    }

    fn blend(&mut self, target: &[Vec<f64>], step: f64) {
        for (row, t) in self.shares.iter_mut().zip(target) {
            for (p, &q) in row.iter_mut().zip(t) {
                *p = (1.0 - step) * *p + step * q;
            }
        }
        self.normalise();
    }

    fn swap(&mut self, utility: &[Vec<f64>], rate: f64) {
        if self.departure_choice {
            let mut p: Vec<f64> = self.shares.iter().flatten().copied().collect();
            let u: Vec<f64> = utility.iter().flatten().copied().collect();
            swap_cells(&mut p, &u, rate);
            let n = self.routes.len();
            for (row, chunk) in self.shares.iter_mut().zip(p.chunks(n)) {
                row.copy_from_slice(chunk);
            }
        } else {
            for (row, u) in self.shares.iter_mut().zip(utility) {
                swap_cells(row, u, rate);
            }
        }
        self.normalise();
    }

    /// `shares + step * utility`, projected back onto the choice simplex.
    fn projected(&self, utility: &[Vec<f64>], step: f64) -> Self {
        let mut out = self.clone();
        for (row, u) in out.shares.iter_mut().zip(utility) {
            for (p, &v) in row.iter_mut().zip(u) {
                *p += step * v;
            }
        }
        if out.departure_choice {
            let mut flat: Vec<f64> = out.shares.iter().flatten().copied().collect();
            project_simplex(&mut flat);
            let n = out.routes.len();
            for (row, chunk) in out.shares.iter_mut().zip(flat.chunks(n)) {
                row.copy_from_slice(chunk);
            }
        } else {
            out.shares.iter_mut().for_each(|row| project_simplex(row));
        }
        out.normalise();
        out
    }

    /// Rescales so the margins stay exact.
    fn normalise(&mut self) {
        if self.departure_choice {
            let s: f64 = self.shares.iter().flatten().sum();
            self.shares.iter_mut().flatten().for_each(|p| *p /= s);
        } else {
            for row in &mut self.shares {
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= s);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumState {
    pub bin_width: f64,
    pub splits: Vec<GroupSplit>,
    pub flows: RouteFlowPattern,
    pub times: TravelTimePattern,
    /// Relative gap (fixed departures) or relative utility regret (departure choice).
    pub gap: f64,
    pub gap_trace: Vec<(usize, f64)>,
    /// Iteration at which the returned state was visited.
    pub iteration: usize,
    pub converged: bool,
}

impl EquilibriumState {
    pub fn bins(&self) -> usize {
        self.splits.first().map_or(0, |s| s.shares.len())
    }
}

/// One pairwise-swap step on a single choice set, computed from the current shares.
fn swap_cells(p: &mut [f64], u: &[f64], rate: f64) {
    let old = p.to_vec();
    for i in 0..old.len() {
        if old[i] <= 0.0 {
            continue;
        }
        let pull: f64 = u.iter().map(|&uj| (uj - u[i]).max(0.0)).sum();
        if pull <= 0.0 {
            continue;
        }
        let moved = old[i] * (rate * pull).min(1.0);
        p[i] -= moved;
        for (j, &uj) in u.iter().enumerate() {
            let d = uj - u[i];
            if d > 0.0 {
                p[j] += moved * d / pull;
            }
        }
    }
    p.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Euclidean projection onto `{p >= 0, sum p = 1}`.
fn project_simplex(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        acc += x;
        let t = (acc - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

struct Response {
    /// All-or-nothing target per group, `[bin][k]`.
    targets: Vec<Vec<Vec<f64>>>,
    /// Utility of every cell per group, `[bin][k]` (minus travel time without departure choice).
    utilities: Vec<Vec<Vec<f64>>>,
    regret: f64,
}

enum Source<'a> {
    Fixed(&'a CumulativeFlow),
    Choice { mass: f64, preferred_arrival: f64, alpha: f64, beta: f64, gamma: f64 },
}

struct Problem<'a> {
    network: &'a Network,
    horizon: Horizon,
    bins: usize,
    width: f64,
    sources: Vec<Source<'a>>,
}

impl Problem<'_> {
    fn bin_of(&self, t: f64) -> usize {
        ((t / self.width).floor().max(0.0) as usize).min(self.bins - 1)
    }

    /// Cut points of a fixed-departure source: its knots and the bin edges inside its support.
    fn cuts(&self, q: &CumulativeFlow) -> Vec<f64> {
        let Some((a, b)) = q.support() else {
            return Vec::new();
        };
        let mut cuts: Vec<f64> = q.knots().iter().map(|k| k.time).collect();
        cuts.extend((0..=self.bins).map(|i| i as f64 * self.width).filter(|&t| t > a && t < b));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts
    }

    fn flows(&self, splits: &[GroupSplit]) -> Result<RouteFlowPattern> {
        let mut parts: Vec<Vec<CumulativeFlow>> = vec![Vec::new(); self.network.routes().len()];
        for (split, source) in splits.iter().zip(&self.sources) {
            for (k, &r) in split.routes.iter().enumerate() {
                let mut segs = Vec::new();
                match source {
                    Source::Fixed(q) => {
                        for w in self.cuts(q).windows(2) {
                            let bin = self.bin_of(0.5 * (w[0] + w[1]));
                            segs.push((w[0], w[1], q.density_at(w[0]) * split.shares[bin][k]));
                        }
                    }
                    Source::Choice { mass, .. } => {
                        for (b, row) in split.shares.iter().enumerate() {
                            let start = b as f64 * self.width;
                            segs.push((start, start + self.width, mass * row[k] / self.width));
                        }
                    }
                }
                parts[r].push(CumulativeFlow::from_rates(&segs)?);
            }
        }
        Ok(RouteFlowPattern::new(parts.iter().map(|p| CumulativeFlow::sum(p.iter())).collect()))
    }

    /// Per bin, the demand-weighted mean time of each route of a fixed-departure source, and
    /// the demand in the bin.
    fn bin_times(&self, q: &CumulativeFlow, routes: &[usize], times: &TravelTimePattern) -> Vec<(f64, Vec<f64>)> {
        let mut acc = vec![(0.0, vec![0.0; routes.len()]); self.bins];
        for w in self.cuts(q).windows(2) {
            let m = q.density_at(w[0]) * (w[1] - w[0]);
            if m <= 0.0 {
                continue;
            }
            let bin = &mut acc[self.bin_of(0.5 * (w[0] + w[1]))];
            bin.0 += m;
            for (k, &r) in routes.iter().enumerate() {
                bin.1[k] += m * times.average(r, w[0], w[1]);
            }
        }
        for (b, (m, ts)) in acc.iter_mut().enumerate() {
            if *m > 0.0 {
                ts.iter_mut().for_each(|t| *t /= *m);
            } else {
                let (s, e) = (b as f64 * self.width, (b + 1) as f64 * self.width);
                for (k, &r) in routes.iter().enumerate() {
                    ts[k] = times.average(r, s, e);
                }
            }
        }
        acc
    }

    /// Bin-averaged utility of each (bin, route) cell for a departure-choice source.
    fn utilities(&self, source: &Source, routes: &[usize], times: &TravelTimePattern) -> Vec<Vec<f64>> {
        let Source::Choice { preferred_arrival, alpha, beta, gamma, .. } = *source else {
            unreachable!("utilities are only defined for departure-choice sources")
        };
        (0..self.bins)
            .map(|b| {
                routes
                    .iter()
                    .map(|&r| {
                        let mut u = 0.0;
                        for j in 0..UTILITY_QUADRATURE {
                            let h = (b as f64 + (j as f64 + 0.5) / UTILITY_QUADRATURE as f64) * self.width;
                            u += scheduling_utility(h, times.eval(r, h), preferred_arrival, alpha, beta, gamma);
                        }
                        u / UTILITY_QUADRATURE as f64
                    })
                    .collect()
            })
            .collect()
    }

    /// Best-response targets for every group, plus the relative regret of the current split.
    fn best_response(&self, splits: &[GroupSplit], times: &TravelTimePattern, tie: f64) -> Response {
        let mut regret = 0.0;
        let mut scale = 0.0;
        let mut mass = 0.0;
        let mut targets = Vec::with_capacity(splits.len());
        let mut utilities = Vec::with_capacity(splits.len());
        for (split, source) in splits.iter().zip(&self.sources) {
            let n = split.routes.len();
            let mut target = vec![vec![0.0; n]; self.bins];
            let utility = match source {
                Source::Fixed(q) => {
                    let mut utility = Vec::with_capacity(self.bins);
                    for (b, (m, ts)) in self.bin_times(q, &split.routes, times).into_iter().enumerate() {
                        let best = ts.iter().copied().fold(f64::INFINITY, f64::min);
                        let k = ts.iter().position(|&t| t <= best + tie).unwrap_or(0);
                        target[b][k] = 1.0;
                        let achieved: f64 = split.shares[b].iter().zip(&ts).map(|(p, t)| p * t).sum();
                        regret += m * (achieved - best);
                        scale += m * best.abs();
                        mass += m;
                        utility.push(ts.iter().map(|t| -t).collect());
                    }
                    utility
                }
                Source::Choice { mass: m, .. } => {
                    let u = self.utilities(source, &split.routes, times);
                    let best = u.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
                    // lowest route first, then the earliest bin
                    let (kb, bb) = (0..n)
                        .flat_map(|k| (0..self.bins).map(move |b| (k, b)))
                        .find(|&(k, b)| u[b][k] >= best - tie)
                        .unwrap_or((0, 0));
                    target[bb][kb] = 1.0;
                    let achieved: f64 =
                        split.shares.iter().zip(&u).flat_map(|(ps, us)| ps.iter().zip(us)).map(|(p, u)| p * u).sum();
                    regret += m * (best - achieved);
                    scale += m * best.abs();
                    mass += m;
                    u
                }
            };
            targets.push(target);
            utilities.push(utility);
        }
        let regret = if mass > 0.0 { (regret / mass).max(0.0) / (scale / mass + 1.0) } else { 0.0 };
        Response { targets, utilities, regret }
    }
}

/// Averages the current split with the best response until the gap meets the tolerance.
fn iterate(
    problem: &Problem,
    mut splits: Vec<GroupSplit>,
    config: &SolverConfig,
    departure_choice: bool,
    observer: &mut dyn FnMut(usize, &RouteFlowPattern),
) -> Result<EquilibriumState> {
    let mut trace = Vec::new();
    let mut best: Option<EquilibriumState> = None;
    for n in 1..=config.max_iterations {
        let flows = problem.flows(&splits)?;
        observer(n, &flows);
        let bundle = load(problem.network, &flows)?;
        let times = route_times(problem.network, &bundle, problem.horizon);
        let response = problem.best_response(&splits, &times, config.tie_tolerance);
        let regret = response.regret;
        let gap = if departure_choice { regret } else { wardrop_gap(problem.network, &flows, &times)? };
        trace.push((n, gap));
        log::debug!("iteration {n}: gap {gap:e}");
        let converged = gap <= config.tolerance;
        if best.as_ref().is_none_or(|b| gap < b.gap) {
            best = Some(EquilibriumState {
                bin_width: problem.width,
                splits: splits.clone(),
                flows,
                times,
                gap,
                gap_trace: Vec::new(),
                iteration: n,
                converged,
            });
        }
        if converged {
            break;
        }
        match config.step_rule {
            StepRule::Swap(rate) => {
                for (split, u) in splits.iter_mut().zip(&response.utilities) {
                    split.swap(u, rate);
                }
            }
            StepRule::Extragradient(rate) => {
                let trial: Vec<GroupSplit> =
                    splits.iter().zip(&response.utilities).map(|(split, u)| split.projected(u, rate)).collect();
                let bundle = load(problem.network, &problem.flows(&trial)?)?;
                let times = route_times(problem.network, &bundle, problem.horizon);
                let at_trial = problem.best_response(&trial, &times, config.tie_tolerance);
                for (split, u) in splits.iter_mut().zip(&at_trial.utilities) {
                    *split = split.projected(u, rate);
                }
            }
            _ => {
                let step = config.step(n);
                for (split, target) in splits.iter_mut().zip(&response.targets) {
                    split.blend(target, step);
                }
            }
        }
    }
    let mut state = best.expect("at least one iteration runs");
    state.gap_trace = trace;
    if !state.converged {
        log::warn!(
            "tolerance {} not met after {} iterations (best gap {:e})",
            config.tolerance,
            config.max_iterations,
            state.gap
        );
    }
    Ok(state)
}

/// Route flows of a state built by [`solve_wardrop`]: each bin of each pair's demand split
/// across its routes.
pub fn induced_flows(state: &EquilibriumState, demand: &DemandTable, network: &Network) -> Result<RouteFlowPattern> {
    let problem = wardrop_problem(network, demand, state.bins(), state.bin_width)?;
    problem.flows(&state.splits)
}

fn wardrop_problem<'a>(network: &'a Network, demand: &'a DemandTable, bins: usize, width: f64) -> Result<Problem<'a>> {
    demand.check_routes(network)?;
    Ok(Problem {
        network,
        horizon: demand.horizon(),
        bins,
        width,
        sources: demand.entries().iter().map(|e| Source::Fixed(&e.flow)).collect(),
    })
}

/// Searches for a dynamic Wardrop assignment of fixed-departure demand.
pub fn solve_wardrop(network: &Network, demand: &DemandTable, config: &SolverConfig) -> Result<EquilibriumState> {
    solve_wardrop_observed(network, demand, config, &mut |_, _| {})
}

/// [`solve_wardrop`], calling `observer` with the route flows of every iteration.
pub fn solve_wardrop_observed(
    network: &Network,
    demand: &DemandTable,
    config: &SolverConfig,
    observer: &mut dyn FnMut(usize, &RouteFlowPattern),
) -> Result<EquilibriumState> {
    let (bins, width) = config.bins(demand.horizon())?;
    let problem = wardrop_problem(network, demand, bins, width)?;
    let splits = demand
        .entries()
        .iter()
        .map(|e| {
            let routes = network.routes_between(&e.origin, &e.destination);
            GroupSplit::uniform(&e.origin, &e.destination, routes, bins, false)
        })
        .collect();
    iterate(&problem, splits, config, false, observer)
}

/// Searches for a joint route and departure-time equilibrium of the given user classes.
pub fn solve_departure_choice(
    network: &Network,
    classes: &[UserClass],
    horizon: Horizon,
    config: &SolverConfig,
) -> Result<EquilibriumState> {
    solve_departure_choice_observed(network, classes, horizon, config, &mut |_, _| {})
}

/// [`solve_departure_choice`], calling `observer` with the route flows of every iteration.
pub fn solve_departure_choice_observed(
    network: &Network,
    classes: &[UserClass],
    horizon: Horizon,
    config: &SolverConfig,
    observer: &mut dyn FnMut(usize, &RouteFlowPattern),
) -> Result<EquilibriumState> {
    if classes.is_empty() {
        return Err(Error::Config("departure-time choice needs at least one user class".into()));
    }
    let (bins, width) = config.bins(horizon)?;
    let mut sources = Vec::with_capacity(classes.len());
    let mut splits = Vec::with_capacity(classes.len());
    for c in classes {
        c.validate(horizon)?;
        let routes = network.routes_between(&c.origin, &c.destination);
        if routes.is_empty() {
            return Err(Error::NoRoute { origin: c.origin.clone(), destination: c.destination.clone() });
        }
        let (source, joint) = match &c.mode {
            ChoiceMode::FixedDeparture { departures } => (Source::Fixed(departures), false),
            &ChoiceMode::DepartureChoice { preferred_arrival, alpha, beta, gamma } => {
                let slowest = routes
                    .iter()
                    .map(|&r| network.routes()[r].arcs.iter().map(|&a| network.arcs()[a].model.t_min()).sum::<f64>())
                    .fold(0.0, f64::max);
                if preferred_arrival - slowest < 0.0 || preferred_arrival > horizon.end() + slowest {
                    log::warn!(
                        "preferred arrival {preferred_arrival} leaves little room inside the horizon [0, {}]",
                        horizon.end()
                    );
                }
                (Source::Choice { mass: c.mass, preferred_arrival, alpha, beta, gamma }, true)
            }
        };
        sources.push(source);
        splits.push(GroupSplit::uniform(&c.origin, &c.destination, routes, bins, joint));
    }
    let problem = Problem { network, horizon, bins, width, sources };
    if config.step_rule == StepRule::Marching {
        let splits = march(&problem, splits)?;
        let once = SolverConfig { max_iterations: 1, ..config.clone() };
        return iterate(&problem, splits, &once, true, observer);
    }
    iterate(&problem, splits, config, true, observer)
}

/// Mass placed per group, bin and route.
type Cells = Vec<Vec<Vec<f64>>>;

fn cells_to_splits(template: &[GroupSplit], cells: &Cells, masses: &[f64]) -> Vec<GroupSplit> {
    template
        .iter()
        .zip(cells)
        .zip(masses)
        .map(|((t, c), &m)| GroupSplit {
            shares: c.iter().map(|row| row.iter().map(|x| x / m).collect()).collect(),
            ..t.clone()
        })
        .collect()
}

/// Bin-averaged utility of route `routes[k]` in bin `b` under the given cells.
fn cell_utility(
    problem: &Problem,
    template: &[GroupSplit],
    cells: &Cells,
    masses: &[f64],
    g: usize,
    k: usize,
    b: usize,
) -> Result<f64> {
    let Source::Choice { preferred_arrival, alpha, beta, gamma, .. } = problem.sources[g] else {
        unreachable!("marching only places departure-choice classes")
    };
    let splits = cells_to_splits(template, cells, masses);
    let bundle = load(problem.network, &problem.flows(&splits)?)?;
    let r = template[g].routes[k];
    let mut u = 0.0;
    for j in 0..UTILITY_QUADRATURE {
        let h = (b as f64 + (j as f64 + 0.5) / UTILITY_QUADRATURE as f64) * problem.width;
        let t = route_arrival(problem.network, &bundle, r, h) - h;
        u += scheduling_utility(h, t, preferred_arrival, alpha, beta, gamma);
    }
    Ok(u / UTILITY_QUADRATURE as f64)
}

/// Fills the bins in departure order so that every used cell sits at its group's level.
fn place(problem: &Problem, template: &[GroupSplit], masses: &[f64], levels: &[f64]) -> Result<Cells> {
    let mut cells: Cells = template.iter().map(|t| vec![vec![0.0; t.routes.len()]; problem.bins]).collect();
    let mut placed = vec![0.0; template.len()];
    let single = template.len() == 1 && template[0].routes.len() == 1;
    for b in 0..problem.bins {
        for _pass in 0..8 {
            let mut change: f64 = 0.0;
            for g in 0..template.len() {
                for k in 0..template[g].routes.len() {
                    let current = cells[g][b][k];
                    let room = (masses[g] - (placed[g] - current)).max(0.0);
                    let f = |v: f64, cells: &mut Cells| -> Result<f64> {
                        cells[g][b][k] = v;
                        Ok(cell_utility(problem, template, cells, masses, g, k, b)? - levels[g])
                    };
                    let v = if room <= 0.0 || f(0.0, &mut cells)? <= 0.0 {
                        0.0
                    } else if f(room, &mut cells)? >= 0.0 {
                        room
                    } else {
                        // regula falsi with the Illinois modification on a decreasing function
                        let (mut lo, mut hi) = (0.0, room);
                        let (mut flo, mut fhi) = (f(lo, &mut cells)?, f(hi, &mut cells)?);
                        let mut side = 0i8;
                        for _ in 0..100 {
                            if hi - lo <= 1e-14 * masses[g] {
                                break;
                            }
                            let mid = (lo + flo * (hi - lo) / (flo - fhi)).clamp(lo, hi);
                            let fm = f(mid, &mut cells)?;
                            if fm.abs() <= 1e-15 {
                                lo = mid;
                                hi = mid;
                                break;
                            }
                            if fm > 0.0 {
                                lo = mid;
                                flo = fm;
                                if side == 1 {
                                    fhi *= 0.5;
                                }
                                side = 1;
                            } else {
                                hi = mid;
                                fhi = fm;
                                if side == -1 {
                                    flo *= 0.5;
                                }
                                side = -1;
                            }
                        }
                        0.5 * (lo + hi)
                    };
                    cells[g][b][k] = v;
                    placed[g] += v - current;
                    change = change.max((v - current).abs());
                }
            }
            if single || change <= 1e-14 {
                break;
            }
        }
    }
    Ok(cells)
}

fn march(problem: &Problem, template: Vec<GroupSplit>) -> Result<Vec<GroupSplit>> {
    let masses: Vec<f64> = problem
        .sources
        .iter()
        .map(|s| match s {
            Source::Choice { mass, .. } => Ok(*mass),
            Source::Fixed(_) => Err(Error::Config("marching needs every class to choose its departure time".into())),
        })
        .collect::<Result<_>>()?;
    let empty: Cells = template.iter().map(|t| vec![vec![0.0; t.routes.len()]; problem.bins]).collect();
    // the best utility on an empty network bounds every level from above
    let mut levels = Vec::with_capacity(template.len());
    for (g, t) in template.iter().enumerate() {
        let mut best = f64::NEG_INFINITY;
        for b in 0..problem.bins {
            for k in 0..t.routes.len() {
                best = best.max(cell_utility(problem, &template, &empty, &masses, g, k, b)?);
            }
        }
        levels.push(best);
    }
    let used = |cells: &Cells, g: usize| cells[g].iter().flatten().sum::<f64>();
    let rounds = if template.len() == 1 { 1 } else { 10 };
    let mut cells = empty.clone();
    for _ in 0..rounds {
        for g in 0..template.len() {
            let mut hi = levels[g];
            let mut lo = hi - 1.0;
            let mut lv = levels.clone();
            for _ in 0..60 {
                lv[g] = lo;
                if used(&place(problem, &template, &masses, &lv)?, g) >= masses[g] * (1.0 - 1e-12) {
                    break;
                }
                let width = hi - lo;
                hi = lo;
                lo -= 2.0 * width;
            }
            for _ in 0..60 {
                if hi - lo <= 1e-12 * (1.0 + hi.abs()) {
                    break;
                }
                lv[g] = 0.5 * (lo + hi);
                if used(&place(problem, &template, &masses, &lv)?, g) >= masses[g] * (1.0 - 1e-12) {
                    lo = lv[g];
                } else {
                    hi = lv[g];
                }
            }
            levels[g] = lo;
        }
        cells = place(problem, &template, &masses, &levels)?;
        log::debug!("marching levels {levels:?}");
    }
    let mut splits = cells_to_splits(&template, &cells, &masses);
    for s in &mut splits {
        s.normalise();
    }
    Ok(splits)
}
