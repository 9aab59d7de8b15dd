use crate::error::{Error, Result};
use crate::loading::TravelTimePattern;
use crate::network::{Network, RouteFlowPattern};

/// Midpoint subintervals per density segment when integrating against route times.
pub const GAP_QUADRATURE: usize = 16;

/// Relative Wardrop gap: mass-weighted excess of each route's travel time over the fastest
/// route of its origin-destination pair at the same departure time, divided by the
/// mass-weighted travel time. Zero exactly when no used route is slower than an alternative
/// (at quadrature resolution).
pub fn wardrop_gap(network: &Network, x: &RouteFlowPattern, times: &TravelTimePattern) -> Result<f64> {
    let alternatives: Vec<Vec<usize>> =
        network.routes().iter().map(|r| network.routes_between(&r.origin, &r.destination)).collect();
    let mut excess = 0.0;
    let mut weighted = 0.0;
    for (r, flow) in x.flows().iter().enumerate() {
        let mut add = |h: f64, mass: f64| {
            let t = times.eval(r, h);
            let best = alternatives[r].iter().map(|&q| times.eval(q, h)).fold(f64::INFINITY, f64::min);
            excess += mass * (t - best).max(0.0);
            weighted += mass * t;
        };
        let knots = flow.knots();
        for (i, k) in knots.iter().enumerate() {
            let atom = flow.atom_at(k.time);
            if atom > 0.0 {
                add(k.time, atom);
            }
            if let Some(next) = knots.get(i + 1) {
                if k.slope > 0.0 {
                    let dt = (next.time - k.time) / GAP_QUADRATURE as f64;
                    for j in 0..GAP_QUADRATURE {
                        add(k.time + (j as f64 + 0.5) * dt, k.slope * dt);
                    }
                }
            }
        }
    }
    if weighted <= 0.0 {
        return Err(Error::DegenerateDemand);
    }
    Ok((excess / weighted).clamp(0.0, 1.0))
}

/// Scheduling utility `-alpha t - beta (h* - a)^+ - gamma (a - h*)^+` with arrival `a = h + t`.
pub fn scheduling_utility(h: f64, t: f64, preferred_arrival: f64, alpha: f64, beta: f64, gamma: f64) -> f64 {
    let arrival = h + t;
    -alpha * t - beta * (preferred_arrival - arrival).max(0.0) - gamma * (arrival - preferred_arrival).max(0.0)
}
