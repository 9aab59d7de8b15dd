//! Brute-force reference solvers used to cross-check the exact ones.
//!
//! The loader chops route inflows into small particles and pushes them through the network
//! one at a time in time order, each arc serving them with its own discrete rule. It shares
//! no code with the breakpoint propagation in [`crate::loading`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::arc::ArcModel;
use crate::equilibrium::{wardrop_gap, DemandTable};
use crate::error::{Error, Result};
use crate::loading::{load, route_times, ArcFlowBundle};
use crate::measure::CumulativeFlow;
use crate::network::{Network, RouteFlowPattern};

/// Uniform time grid of the reference loader.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub step: f64,
}

impl GridConfig {
    /// Checks `0 < step <= t_min* / 8` for `network`.
    pub fn validate(&self, network: &Network) -> Result<()> {
        let limit = network.t_min_star() / 8.0;
        if !(self.step > 0.0 && self.step <= limit * (1.0 + 1e-12)) {
            return Err(Error::Config(format!(
                "oracle step {} must lie in ]0, {limit}] (an eighth of the smallest arc t_min)",
                self.step
            )));
        }
        Ok(())
    }

    /// The coarsest valid grid for `network`.
    pub fn coarsest(network: &Network) -> Self {
        Self { step: network.t_min_star() / 8.0 }
    }
}

/// One particle's passage through an arc.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Passage {
    entry: f64,
    exit: f64,
    mass: f64,
}

/// Arc flows produced by the particle loader, sampled on its grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleBundle {
    step: f64,
    inflows: Vec<Vec<CumulativeFlow>>,
    outflows: Vec<CumulativeFlow>,
    passages: Vec<Vec<Passage>>,
    exits_sorted: Vec<Vec<(f64, f64)>>,
}

impl OracleBundle {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn inflow(&self, arc: usize, route: usize) -> &CumulativeFlow {
        &self.inflows[arc][route]
    }

    pub fn outflow(&self, arc: usize) -> &CumulativeFlow {
        &self.outflows[arc]
    }

    /// Exit time of a massless user entering `arc` at `h`, behind everyone who entered by `h`.
    pub fn arc_exit(&self, network: &Network, arc: usize, h: f64) -> f64 {
        let passages = &self.passages[arc];
        let ahead = passages.partition_point(|p| p.entry <= h);
        match &network.arcs()[arc].model {
            ArcModel::Constant { free_flow_time } => h + free_flow_time,
            ArcModel::Bottleneck { free_flow_time, .. } => {
                let busy = passages[..ahead].iter().map(|p| p.exit).fold(f64::NEG_INFINITY, f64::max);
                (h + free_flow_time).max(busy)
            }
            ArcModel::ArcPerformance { delay, .. } => {
                let entered: f64 = passages[..ahead].iter().map(|p| p.mass).sum();
                let exits = &self.exits_sorted[arc];
                let left: f64 = exits[..exits.partition_point(|e| e.0 <= h)].iter().map(|e| e.1).sum();
                h + delay.eval((entered - left).max(0.0))
            }
        }
    }

    /// Travel time of a massless user departing on `route` at `h`.
    pub fn route_time(&self, network: &Network, route: usize, h: f64) -> f64 {
        network.routes()[route].arcs.iter().fold(h, |t, &a| self.arc_exit(network, a, t)) - h
    }

    /// Largest gap to the exact loader's arc inflows and outflows at the given times.
    pub fn distance(&self, exact: &ArcFlowBundle, routes: usize, times: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.inflows.len() {
            for r in 0..routes {
                let (o, e) = (&self.inflows[a][r], exact.inflow(a, r));
                for &t in times {
                    worst = worst.max((o.value_at(t) - e.value_at(t)).abs());
                }
            }
            for &t in times {
                worst = worst.max((self.outflows[a].value_at(t) - exact.outflow(a).value_at(t)).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    particle: usize,
    hop: usize,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // reversed for a min-heap on (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Splits a route flow into particles of mass at most `cap`: atoms stay at their times,
/// the density part of each grid cell is cut into equal pieces spread over the cell.
fn particles(flow: &CumulativeFlow, step: f64, cap: f64) -> Vec<(f64, f64)> {
    let Some((first, last)) = flow.support() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let k0 = (first / step).floor() as i64;
    let k1 = (last / step).ceil() as i64;
    for k in k0..=k1 {
        let (a, b) = (k as f64 * step, (k + 1) as f64 * step);
        let mut atoms: Vec<(f64, f64)> = flow
            .knots()
            .iter()
            .filter(|kn| kn.time > a && kn.time <= b)
            .map(|kn| (kn.time, flow.atom_at(kn.time)))
            .filter(|x| x.1 > 0.0)
            .collect();
        if k == k0 && flow.atom_at(a) > 0.0 && a >= first {
            atoms.insert(0, (a, flow.atom_at(a)));
        }
        let dense = flow.measure_of(a, b) - atoms.iter().filter(|x| x.0 > a).map(|x| x.1).sum::<f64>();
        let mut cell: Vec<(f64, f64)> = Vec::new();
        for (t, m) in atoms {
            let n = (m / cap).ceil().max(1.0) as usize;
            cell.extend(std::iter::repeat_n((t, m / n as f64), n));
        }
        if dense > 1e-15 {
            let n = (dense / cap).ceil().max(1.0) as usize;
            for j in 0..n {
                cell.push((a + (j as f64 + 0.5) * step / n as f64, dense / n as f64));
            }
        }
        cell.sort_by(|x, y| x.0.total_cmp(&y.0));
        out.extend(cell);
    }
    out
}

/// Cumulative curve sampled at grid points `k * step`, linear in between.
fn sampled(masses: &[(f64, f64)], step: f64) -> Result<CumulativeFlow> {
    if masses.is_empty() {
        return Ok(CumulativeFlow::zero());
    }
    let mut sorted = masses.to_vec();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let k0 = (sorted[0].0 / step).floor() as i64 - 1;
    let k1 = (sorted[sorted.len() - 1].0 / step).ceil() as i64;
    let mut points = Vec::with_capacity((k1 - k0 + 1) as usize);
    let mut i = 0;
    let mut acc = 0.0;
    for k in k0..=k1 {
        let t = k as f64 * step;
        while i < sorted.len() && sorted[i].0 <= t {
            acc += sorted[i].1;
            i += 1;
        }
        points.push((t, acc));
    }
    CumulativeFlow::from_points(&points)
}

/// Time-stepped particle loader.
pub fn oracle_load(network: &Network, x: &RouteFlowPattern, grid: GridConfig) -> Result<OracleBundle> {
    grid.validate(network)?;
    let routes = network.routes();
    let arcs = network.arcs();
    if x.len() != routes.len() {
        return Err(Error::InvalidFlow(format!("{} route flows given for {} routes", x.len(), routes.len())));
    }
    let step = grid.step;
    let span = x.last_time().unwrap_or(1.0).max(1.0);
    let cap = step * (x.total() / span).max(1.0);

    let mut particle_route = Vec::new();
    let mut particle_mass = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    for (r, flow) in x.flows().iter().enumerate() {
        for (t, m) in particles(flow, step, cap) {
            heap.push(Event { time: t, seq, particle: particle_route.len(), hop: 0 });
            seq += 1;
            particle_route.push(r);
            particle_mass.push(m);
        }
    }

    let mut entries: Vec<Vec<Vec<(f64, f64)>>> = vec![vec![Vec::new(); routes.len()]; arcs.len()];
    let mut passages: Vec<Vec<Passage>> = vec![Vec::new(); arcs.len()];
    let mut server_free = vec![f64::NEG_INFINITY; arcs.len()];
    let mut entered = vec![0.0; arcs.len()];
    let mut pending: Vec<BinaryHeap<std::cmp::Reverse<(u64, usize)>>> = vec![BinaryHeap::new(); arcs.len()];
    let mut pending_mass: Vec<Vec<f64>> = vec![Vec::new(); arcs.len()];
    let mut left = vec![0.0; arcs.len()];

    while let Some(ev) = heap.pop() {
        let r = particle_route[ev.particle];
        let m = particle_mass[ev.particle];
        let route = &routes[r];
        if ev.hop == route.arcs.len() {
            continue;
        }
        let a = route.arcs[ev.hop];
        let t = ev.time;
        let exit = match &arcs[a].model {
            ArcModel::Constant { free_flow_time } => t + free_flow_time,
            ArcModel::Bottleneck { free_flow_time, capacity } => {
                let start = (t + free_flow_time).max(server_free[a]);
                server_free[a] = start + m / capacity;
                server_free[a]
            }
            ArcModel::ArcPerformance { delay, .. } => {
                // release everyone who has left by t
                while let Some(std::cmp::Reverse((bits, idx))) = pending[a].peek().copied() {
                    if f64::from_bits(bits) > t {
                        break;
                    }
                    pending[a].pop();
                    left[a] += pending_mass[a][idx];
                }
                let v = entered[a] + 0.5 * m - left[a];
                t + delay.eval(v.max(0.0))
            }
        };
        if matches!(arcs[a].model, ArcModel::ArcPerformance { .. }) {
            // exits are positive, so their bit patterns order like the values
            pending_mass[a].push(m);
            pending[a].push(std::cmp::Reverse((exit.max(0.0).to_bits(), pending_mass[a].len() - 1)));
        }
        entered[a] += m;
        entries[a][r].push((t, m));
        passages[a].push(Passage { entry: t, exit, mass: m });
        heap.push(Event { time: exit, seq, particle: ev.particle, hop: ev.hop + 1 });
        seq += 1;
    }

    let inflows = entries
        .iter()
        .map(|per_route| per_route.iter().map(|e| sampled(e, step)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let outflows = passages
        .iter()
        .map(|ps| sampled(&ps.iter().map(|p| (p.exit, p.mass)).collect::<Vec<_>>(), step))
        .collect::<Result<Vec<_>>>()?;
    let exits_sorted = passages
        .iter()
        .map(|ps| {
            let mut e: Vec<(f64, f64)> = ps.iter().map(|p| (p.exit, p.mass)).collect();
            e.sort_by(|x, y| x.0.total_cmp(&y.0));
            e
        })
        .collect();
    Ok(OracleBundle { step, inflows, outflows, passages, exits_sorted })
}

/// Reference equilibrium found by the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleEquilibrium {
    pub flows: RouteFlowPattern,
    pub bin_width: f64,
    /// Relative gap of `flows` under the exact loader.
    pub gap: f64,
}

pub const ORACLE_MAX_ROUTES: usize = 4;
pub const ORACLE_MAX_ARCS: usize = 6;

/// Demand split per fine bin into route flows.
fn split_flows(
    network: &Network,
    demand: &DemandTable,
    shares: &[Vec<Vec<f64>>],
    width: f64,
) -> Result<RouteFlowPattern> {
    let bins = shares.first().map_or(0, Vec::len);
    let mut parts: Vec<Vec<CumulativeFlow>> = vec![Vec::new(); network.routes().len()];
    for (e, sh) in demand.entries().iter().zip(shares) {
        let routes = network.routes_between(&e.origin, &e.destination);
        let Some((a, b)) = e.flow.support() else { continue };
        let mut cuts: Vec<f64> = e.flow.knots().iter().map(|k| k.time).collect();
        cuts.extend((0..=bins).map(|i| i as f64 * width).filter(|&t| t > a && t < b));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        for (k, &r) in routes.iter().enumerate() {
            let segs: Vec<(f64, f64, f64)> = cuts
                .windows(2)
                .map(|w| {
                    let bin = (((w[0] + w[1]) / 2.0 / width) as usize).min(bins - 1);
                    (w[0], w[1], e.flow.density_at(w[0]) * sh[bin][k])
                })
                .collect();
            parts[r].push(CumulativeFlow::from_rates(&segs)?);
        }
    }
    Ok(RouteFlowPattern::new(parts.iter().map(|p| CumulativeFlow::sum(p.iter())).collect()))
}

/// Bisection steps used to balance one pair of routes within a bin.
const PAIR_BISECTIONS: usize = 24;
/// Departure probes per bin when averaging oracle route times.
const PROBES: usize = 4;

/// Fills bins of about twice the grid step in time order. Within each bin, every pair of
/// routes of a pair is balanced by bisection on how they share their combined mass, until the
/// bin-averaged particle-loader times agree. `rounds` sweeps over all pairs are made per bin.
/// Later bins never affect earlier times, so earlier bins stay settled. Small instances only.
pub fn oracle_equilibrium(
    network: &Network,
    demand: &DemandTable,
    grid: GridConfig,
    rounds: usize,
) -> Result<OracleEquilibrium> {
    if network.routes().len() > ORACLE_MAX_ROUTES || network.arcs().len() > ORACLE_MAX_ARCS {
        return Err(Error::InstanceTooLarge(format!(
            "{} routes and {} arcs (limits {ORACLE_MAX_ROUTES} and {ORACLE_MAX_ARCS})",
            network.routes().len(),
            network.arcs().len()
        )));
    }
    grid.validate(network)?;
    demand.check_routes(network)?;
    let horizon = demand.horizon().end();
    let bins = ((horizon / (2.0 * grid.step)).round() as usize).max(1);
    let width = horizon / bins as f64;
    let groups: Vec<Vec<usize>> =
        demand.entries().iter().map(|e| network.routes_between(&e.origin, &e.destination)).collect();
    let mut shares: Vec<Vec<Vec<f64>>> =
        groups.iter().map(|g| vec![vec![1.0 / g.len() as f64; g.len()]; bins]).collect();

    // average oracle time of each route over bin `b`, loading only departures before its end
    let bin_times = |shares: &[Vec<Vec<f64>>], b: usize| -> Result<Vec<f64>> {
        let end = (b + 1) as f64 * width;
        let flows = split_flows(network, demand, shares, width)?.restrict(end);
        let bundle = oracle_load(network, &flows, grid)?;
        Ok((0..network.routes().len())
            .map(|r| {
                (0..PROBES)
                    .map(|j| bundle.route_time(network, r, (b as f64 + (j as f64 + 0.5) / PROBES as f64) * width))
                    .sum::<f64>()
                    / PROBES as f64
            })
            .collect())
    };

    for b in 0..bins {
        for _ in 0..rounds.max(1) {
            for (g, routes) in groups.iter().enumerate() {
                for i in 0..routes.len() {
                    for j in i + 1..routes.len() {
                        let pooled = shares[g][b][i] + shares[g][b][j];
                        if pooled <= 0.0 {
                            continue;
                        }
                        // excess of route i over route j when i carries `s` of the pooled share
                        let mut excess = |s: f64| -> Result<f64> {
                            shares[g][b][i] = s;
                            shares[g][b][j] = pooled - s;
                            let t = bin_times(&shares, b)?;
                            Ok(t[routes[i]] - t[routes[j]])
                        };
                        let s = if excess(pooled)? <= 0.0 {
                            pooled
                        } else if excess(0.0)? >= 0.0 {
                            0.0
                        } else {
                            let (mut lo, mut hi) = (0.0, pooled);
                            for _ in 0..PAIR_BISECTIONS {
                                let mid = 0.5 * (lo + hi);
                                if excess(mid)? > 0.0 {
                                    hi = mid;
                                } else {
                                    lo = mid;
                                }
                            }
                            0.5 * (lo + hi)
                        };
                        shares[g][b][i] = s;
                        shares[g][b][j] = pooled - s;
                    }
                }
            }
        }
    }
    let flows = split_flows(network, demand, &shares, width)?;
    let exact = load(network, &flows)?;
    let gap = wardrop_gap(network, &flows, &route_times(network, &exact, demand.horizon()))?;
    Ok(OracleEquilibrium { flows, bin_width: width, gap })
}

/// Mass-normalised L1 distance between two route flow patterns aggregated on bins of
/// `width` over `[0, horizon]`: `sum_r sum_b |a_r(bin) - b_r(bin)| / total mass of a`.
pub fn bin_l1_distance(a: &RouteFlowPattern, b: &RouteFlowPattern, width: f64, horizon: f64) -> f64 {
    let bins = (horizon / width).round() as usize;
    let mut diff = 0.0;
    for (fa, fb) in a.flows().iter().zip(b.flows()) {
        for k in 0..bins {
            let (s, e) = (k as f64 * width, (k + 1) as f64 * width);
            // the first bin also holds mass departing exactly at 0
            let s = if k == 0 { f64::NEG_INFINITY } else { s };
            diff += (fa.measure_of(s, e) - fb.measure_of(s, e)).abs();
        }
    }
    let total = a.total();
    if total > 0.0 {
        diff / total
    } else {
        diff
    }
}
