//! Dynamic network loading: arc flows and route travel times induced by route inflows.

use crate::arc::{ExitTimeCurve, TravelTimeModel};
use crate::error::{Error, Result};
use crate::measure::{CumulativeFlow, Horizon};
use crate::network::{Network, RouteFlowPattern};

/// Pushes each per-route inflow of one arc through the exit-time curve of their total.
pub fn flowing(model: &dyn TravelTimeModel, inflows: &[CumulativeFlow]) -> Result<Vec<CumulativeFlow>> {
    let total = CumulativeFlow::sum(inflows.iter());
    let curve = model.exit_curve(&total)?;
    inflows.iter().map(|y| y.pushforward(&curve)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoadOptions {
    /// Frontier advance per step; defaults to the smallest arc `t_min`. Must not exceed it.
    pub frontier_step: Option<f64>,
}

/// Arc inflows per route, their totals, and the resulting exit curves and outflows.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcFlowBundle {
    inflows: Vec<Vec<CumulativeFlow>>,
    totals: Vec<CumulativeFlow>,
    curves: Vec<ExitTimeCurve>,
    outflows: Vec<CumulativeFlow>,
    route_exits: Vec<CumulativeFlow>,
    steps: usize,
}

impl ArcFlowBundle {
    /// Inflow of route `route` into arc `arc` (zero when the route avoids the arc).
    pub fn inflow(&self, arc: usize, route: usize) -> &CumulativeFlow {
        &self.inflows[arc][route]
    }

    pub fn total(&self, arc: usize) -> &CumulativeFlow {
        &self.totals[arc]
    }

    pub fn curve(&self, arc: usize) -> &ExitTimeCurve {
        &self.curves[arc]
    }

    /// Total outflow of an arc.
    pub fn outflow(&self, arc: usize) -> &CumulativeFlow {
        &self.outflows[arc]
    }

    /// Arrivals of a route at its destination.
    pub fn route_exit(&self, route: usize) -> &CumulativeFlow {
        &self.route_exits[route]
    }

    pub fn arc_count(&self) -> usize {
        self.totals.len()
    }

    /// Frontier steps taken by the loader.
    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// Loads `x` onto `network` with the default frontier step.
pub fn load(network: &Network, x: &RouteFlowPattern) -> Result<ArcFlowBundle> {
    load_with(network, x, LoadOptions::default())
}

/// Propagates route inflows arc by arc behind an advancing frontier time `T = k * step`.
///
/// At step `k` every downstream arc inflow is rebuilt from the previous step's upstream
/// inflows and truncated at `T`. Since nobody crosses an arc faster than `t_min >= step`,
/// what enters any arc before `T` only depends on arc inflows before `T - step`, which the
/// previous step already settled. The loop stops once every truncated inflow carries its
/// route's full mass.
pub fn load_with(network: &Network, x: &RouteFlowPattern, options: LoadOptions) -> Result<ArcFlowBundle> {
    let routes = network.routes();
    let arcs = network.arcs();
    if x.len() != routes.len() {
        return Err(Error::InvalidFlow(format!("{} route flows given for {} routes", x.len(), routes.len())));
    }
    let t_min = network.t_min_star();
    let step = options.frontier_step.unwrap_or(t_min);
    if !(step > 0.0 && step <= t_min) {
        return Err(Error::Config(format!("frontier step {step} must lie in ]0, {t_min}] (the smallest arc t_min)")));
    }

    let mass = x.total();
    let tau = arcs.iter().map(|a| a.model.t_max(mass)).fold(0.0, f64::max);
    let start = x.flows().iter().filter_map(|f| f.support().map(|s| s.0)).reduce(f64::min);
    let end = x.last_time().unwrap_or(0.0);
    let hops: usize = routes.iter().map(|r| r.arcs.len()).sum();
    let budget = end + hops as f64 * tau + 1.0;

    // y[r][i]: inflow of route r into its i-th arc; the first arc sees the route flow as is
    let mut y: Vec<Vec<CumulativeFlow>> = routes
        .iter()
        .zip(x.flows())
        .map(|(r, xr)| {
            let mut ys = vec![CumulativeFlow::zero(); r.arcs.len()];
            ys[0] = xr.clone();
            ys
        })
        .collect();
    let mut steps = 0usize;
    if let Some(start) = start {
        let complete = |y: &[Vec<CumulativeFlow>]| {
            y.iter().zip(x.flows()).all(|(ys, xr)| {
                let want = xr.total();
                ys.iter().all(|f| (f.total() - want).abs() <= 1e-12 * want.max(1e-300))
            })
        };
        let mut k = 0u64;
        while !complete(&y) {
            k += 1;
            steps += 1;
            let frontier = start + k as f64 * step;
            if frontier > budget + step {
                return Err(Error::NonTermination { budget, frontier });
            }
            let curves = arc_curves(network, &y)?;
            let mut next = Vec::with_capacity(routes.len());
            for (r, route) in routes.iter().enumerate() {
                let mut ys = Vec::with_capacity(route.arcs.len());
                ys.push(x.get(r).clone());
                for i in 1..route.arcs.len() {
                    let up = &y[r][i - 1];
                    let moved =
                        if up.is_zero() { CumulativeFlow::zero() } else { up.pushforward(&curves[route.arcs[i - 1]])? };
                    ys.push(moved.restrict(frontier));
                }
                next.push(ys);
            }
            y = next;
        }
        log::debug!("loading settled after {steps} frontier steps of {step}");
    }

    let mut inflows = vec![vec![CumulativeFlow::zero(); routes.len()]; arcs.len()];
    for (r, route) in routes.iter().enumerate() {
        for (i, &a) in route.arcs.iter().enumerate() {
            inflows[a][r] = y[r][i].clone();
        }
    }
    let totals: Vec<CumulativeFlow> = inflows.iter().map(|ys| CumulativeFlow::sum(ys.iter())).collect();
    let curves = totals.iter().zip(arcs).map(|(t, a)| a.model.exit_curve(t)).collect::<Result<Vec<_>>>()?;
    let outflows = totals.iter().zip(&curves).map(|(t, c)| t.pushforward(c)).collect::<Result<Vec<_>>>()?;
    let route_exits = routes
        .iter()
        .enumerate()
        .map(|(r, route)| {
            let last = route.arcs[route.arcs.len() - 1];
            inflows[last][r].pushforward(&curves[last])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ArcFlowBundle { inflows, totals, curves, outflows, route_exits, steps })
}

fn arc_curves(network: &Network, y: &[Vec<CumulativeFlow>]) -> Result<Vec<ExitTimeCurve>> {
    let mut per_arc: Vec<Vec<&CumulativeFlow>> = vec![Vec::new(); network.arcs().len()];
    for (r, route) in network.routes().iter().enumerate() {
        for (i, &a) in route.arcs.iter().enumerate() {
            per_arc[a].push(&y[r][i]);
        }
    }
    per_arc.into_iter().zip(network.arcs()).map(|(ys, arc)| arc.model.exit_curve(&CumulativeFlow::sum(ys))).collect()
}

/// Arrival time at the destination of route `route` for departure `h`, composing the arc
/// exit curves: `H_an(...H_a1(h))`.
pub fn route_arrival(network: &Network, bundle: &ArcFlowBundle, route: usize, h: f64) -> f64 {
    network.routes()[route].arcs.iter().fold(h, |t, &a| bundle.curve(a).eval(t))
}

/// Route travel time accumulated arc by arc: `h_{i+1} = h_i + t_{a_i}(h_i)`, summing the
/// per-arc travel times.
pub fn route_time_recursive(network: &Network, bundle: &ArcFlowBundle, route: usize, h: f64) -> f64 {
    let mut at = h;
    let mut total = 0.0;
    for &a in &network.routes()[route].arcs {
        let t = bundle.curve(a).travel_time(at);
        total += t;
        at += t;
    }
    total
}

fn route_arrival_left(network: &Network, bundle: &ArcFlowBundle, route: usize, h: f64) -> f64 {
    network.routes()[route].arcs.iter().fold(h, |t, &a| bundle.curve(a).eval_left(t))
}

/// Route travel times `t_r(h)` on the horizon, as piecewise-linear functions.
///
/// A departure at an atom of some route carries two points (left and right limits) at the
/// same time, marking the jump.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelTimePattern {
    horizon: f64,
    routes: Vec<Vec<(f64, f64)>>,
}

impl TravelTimePattern {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn route_count(&self) -> usize {
        self.routes.len()
    }

    /// Sample points `(h, t_r(h))` of one route, sorted by `h`.
    pub fn points(&self, route: usize) -> &[(f64, f64)] {
        &self.routes[route]
    }

    /// Right-continuous evaluation; constant extension outside the horizon.
    pub fn eval(&self, route: usize, h: f64) -> f64 {
        let pts = &self.routes[route];
        let i = pts.partition_point(|p| p.0 <= h);
        if i == 0 {
            return pts[0].1;
        }
        if i == pts.len() {
            return pts[i - 1].1;
        }
        let (p, q) = (pts[i - 1], pts[i]);
        if p.0 == h || q.0 == p.0 {
            return p.1;
        }
        p.1 + (q.1 - p.1) * (h - p.0) / (q.0 - p.0)
    }

    /// Mean of `t_r` over `[a, b]`, exact for the piecewise-linear representation.
    pub fn average(&self, route: usize, a: f64, b: f64) -> f64 {
        if b <= a {
            return self.eval(route, a);
        }
        let pts = &self.routes[route];
        let mut cuts = vec![a];
        cuts.extend(pts.iter().map(|p| p.0).filter(|&t| t > a && t < b));
        cuts.push(b);
        cuts.dedup();
        let mut integral = 0.0;
        for w in cuts.windows(2) {
            let (s, e) = (w[0], w[1]);
            let mid = 0.5 * (s + e);
            // linear on ]s, e[, so the midpoint rule is exact
            integral += self.eval(route, mid) * (e - s);
        }
        integral / (b - a)
    }
}

pub const DEFAULT_TIME_SAMPLES: usize = 256;

/// Route travel times over `[0, H]` with the default sampling grid.
pub fn route_times(network: &Network, bundle: &ArcFlowBundle, horizon: Horizon) -> TravelTimePattern {
    route_times_with(network, bundle, horizon, DEFAULT_TIME_SAMPLES)
}

/// Route travel times sampled on a uniform grid of `samples` intervals over `[0, H]` plus
/// the departure times that reach any breakpoint of an exit curve along the route. The
/// composition of piecewise-linear maps is linear between those times, so the result is
/// exact at every departure.
pub fn route_times_with(
    network: &Network,
    bundle: &ArcFlowBundle,
    horizon: Horizon,
    samples: usize,
) -> TravelTimePattern {
    let end = horizon.end();
    let samples = samples.max(1);
    let routes = network
        .routes()
        .iter()
        .enumerate()
        .map(|(r, route)| {
            let mut hs: Vec<f64> = (0..=samples).map(|i| end * i as f64 / samples as f64).collect();
            for (i, &a) in route.arcs.iter().enumerate() {
                for p in bundle.curve(a).points() {
                    // pull the breakpoint back through the arcs before it
                    let h = route.arcs[..i].iter().rev().fold(p.entry, |t, &b| bundle.curve(b).preimage(t));
                    if (0.0..=end).contains(&h) {
                        hs.push(h);
                    }
                }
            }
            hs.sort_by(f64::total_cmp);
            hs.dedup();
            let mut pts = Vec::with_capacity(hs.len());
            for h in hs {
                let right = route_arrival(network, bundle, r, h) - h;
                let left = route_arrival_left(network, bundle, r, h) - h;
                if left < right && h > 0.0 {
                    pts.push((h, left));
                }
                pts.push((h, right));
            }
            pts
        })
        .collect();
    TravelTimePattern { horizon: end, routes }
}
