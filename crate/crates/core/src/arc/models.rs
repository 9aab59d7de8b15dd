use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::curve::{ExitPoint, ExitTimeCurve};
use crate::error::{Error, Result};
use crate::measure::CumulativeFlow;

/// Behaviour shared by every arc travel-time model.
pub trait TravelTimeModel {
    /// Uniform lower bound on the travel time.
    fn t_min(&self) -> f64;

    /// Upper bound on the travel time when the arc carries `mass` users in total.
    fn t_max(&self, mass: f64) -> f64;

    /// The exit-time curve `H(Y)` induced by the total inflow `Y`.
    fn exit_curve(&self, inflow: &CumulativeFlow) -> Result<ExitTimeCurve>;

    /// Inflow rate used when generating random probe inflows.
    fn probe_rate(&self) -> f64 {
        1.0
    }
}

/// Strictly increasing piecewise-linear volume-to-travel-time function with `D(0) > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayFunction {
    points: Vec<(f64, f64)>,
}

impl DelayFunction {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::ModelParameter("delay function needs at least two (volume, time) breakpoints".into()));
        }
        if points[0].0 != 0.0 {
            return Err(Error::ModelParameter("delay function must start at volume 0".into()));
        }
        if !(points[0].1 > 0.0) {
            return Err(Error::ModelParameter(format!("delay at zero volume must be positive, got {}", points[0].1)));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) || !w[1].1.is_finite() {
                return Err(Error::ModelParameter(
                    "delay function must be strictly increasing in volume and time".into(),
                ));
            }
        }
        Ok(Self { points })
    }

    /// `D(v) = a + b v`.
    pub fn affine(free: f64, slope: f64) -> Result<Self> {
        Self::new(vec![(0.0, free), (1.0, free + slope)])
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn d_min(&self) -> f64 {
        self.points[0].1
    }

    pub fn eval(&self, volume: f64) -> f64 {
        let v = volume.max(0.0);
        let i = self.points.partition_point(|p| p.0 <= v).clamp(1, self.points.len() - 1);
        let (v0, d0) = self.points[i - 1];
        let (v1, d1) = self.points[i];
        d0 + (d1 - d0) * (v - v0) / (v1 - v0)
    }

    /// Interior breakpoint volumes strictly inside `(lo, hi)`, ascending.
    fn kinks_between(&self, lo: f64, hi: f64) -> impl Iterator<Item = f64> + '_ {
        self.points[1..self.points.len() - 1].iter().map(|p| p.0).filter(move |&v| v > lo && v < hi)
    }
}

/// The three supported arc models.
#[derive(Debug, Clone, PartialEq)]
pub enum ArcModel {
    /// Fixed travel time.
    Constant { free_flow_time: f64 },
    /// Travel time `D(V(h))` of the volume currently on the arc. `substeps` sets the sampling
    /// step `D(0) / substeps` used while marching the exit curve forward.
    ArcPerformance { delay: DelayFunction, substeps: usize },
    /// Free-flow time followed by a point queue discharging at `capacity` users per second.
    Bottleneck { free_flow_time: f64, capacity: f64 },
}

pub const DEFAULT_SUBSTEPS: usize = 64;

impl ArcModel {
    pub fn constant(free_flow_time: f64) -> Result<Self> {
        let m = Self::Constant { free_flow_time };
        m.validate()?;
        Ok(m)
    }

    pub fn arc_performance(delay: DelayFunction) -> Self {
        Self::ArcPerformance { delay, substeps: DEFAULT_SUBSTEPS }
    }

    pub fn bottleneck(free_flow_time: f64, capacity: f64) -> Result<Self> {
        let m = Self::Bottleneck { free_flow_time, capacity };
        m.validate()?;
        Ok(m)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Constant { .. } => "constant",
            Self::ArcPerformance { .. } => "arc_performance",
            Self::Bottleneck { .. } => "bottleneck",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant { free_flow_time } => {
                if !(free_flow_time.is_finite() && *free_flow_time > 0.0) {
                    return Err(Error::ModelParameter(format!(
                        "constant travel time must be positive, got {free_flow_time}"
                    )));
                }
            }
            Self::ArcPerformance { delay, substeps } => {
                if *substeps == 0 {
                    return Err(Error::ModelParameter("substeps must be at least 1".into()));
                }
                DelayFunction::new(delay.points.clone())?;
            }
            Self::Bottleneck { free_flow_time, capacity } => {
                if !(free_flow_time.is_finite() && *free_flow_time > 0.0) {
                    return Err(Error::ModelParameter(format!(
                        "bottleneck free-flow time must be positive, got {free_flow_time}"
                    )));
                }
                if !(capacity.is_finite() && *capacity > 0.0) {
                    return Err(Error::ModelParameter(format!("bottleneck capacity must be positive, got {capacity}")));
                }
            }
        }
        Ok(())
    }
}

impl TravelTimeModel for ArcModel {
    fn t_min(&self) -> f64 {
        match self {
            Self::Constant { free_flow_time } => *free_flow_time,
            Self::ArcPerformance { delay, .. } => delay.d_min(),
            Self::Bottleneck { free_flow_time, .. } => *free_flow_time,
        }
    }

    fn t_max(&self, mass: f64) -> f64 {
        match self {
            Self::Constant { free_flow_time } => *free_flow_time,
            Self::ArcPerformance { delay, .. } => delay.eval(mass),
            Self::Bottleneck { free_flow_time, capacity } => free_flow_time + mass / capacity,
        }
    }

    fn exit_curve(&self, inflow: &CumulativeFlow) -> Result<ExitTimeCurve> {
        self.validate()?;
        Ok(match self {
            Self::Constant { free_flow_time } => constant_curve(*free_flow_time, inflow),
            Self::ArcPerformance { delay, substeps } => arc_performance_curve(delay, *substeps, inflow),
            Self::Bottleneck { free_flow_time, capacity } => bottleneck_curve(*free_flow_time, *capacity, inflow),
        })
    }

    fn probe_rate(&self) -> f64 {
        match self {
            Self::Bottleneck { capacity, .. } => *capacity,
            _ => 1.0,
        }
    }
}

/// Exit-time curve of `model` under `inflow`.
pub fn exit_curve(model: &dyn TravelTimeModel, inflow: &CumulativeFlow) -> Result<ExitTimeCurve> {
    model.exit_curve(inflow)
}

/// `H(Y)(h) - h`.
pub fn travel_time(model: &dyn TravelTimeModel, inflow: &CumulativeFlow, h: f64) -> Result<f64> {
    Ok(model.exit_curve(inflow)?.travel_time(h))
}

fn constant_curve(travel: f64, inflow: &CumulativeFlow) -> ExitTimeCurve {
    if inflow.knots().is_empty() {
        return ExitTimeCurve::free_flow(travel);
    }
    let mut points = Vec::with_capacity(inflow.knots().len() + 1);
    for k in inflow.knots() {
        let left = inflow.left_limit(k.time);
        points.push(ExitPoint { entry: k.time, mass: left, exit: k.time + travel });
        if k.value > left {
            points.push(ExitPoint { entry: k.time, mass: k.value, exit: k.time + travel });
        }
    }
    ExitTimeCurve::from_sorted(points)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    time: f64,
    kink: bool,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    // reversed: BinaryHeap pops the earliest time, kinks first on ties
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| self.kink.cmp(&other.kink))
    }
}

/// Mass of users whose exit is at or before `h`, read off the exit points computed so far.
/// `cursor` only moves forward, since `h` increases across calls.
fn exited_by(points: &[ExitPoint], cursor: &mut usize, h: f64) -> f64 {
    while *cursor < points.len() && points[*cursor].exit <= h {
        *cursor += 1;
    }
    if *cursor == 0 {
        return 0.0;
    }
    let p = points[*cursor - 1];
    match points.get(*cursor) {
        Some(q) if q.exit > p.exit => p.mass + (q.mass - p.mass) * (h - p.exit) / (q.exit - p.exit),
        _ => p.mass,
    }
}

/// Exit curve of the volume-dependent model `H(h) = h + D(N(h) - Out(h))`.
///
/// Marches forward in entry time in blocks of `d_min = D(0)`: every user that can have left
/// the arc by `h` entered no later than `h - d_min`, so `Out(h)` is read off points already
/// computed. Inside a block the march visits a uniform sub-grid of step `d_min / substeps`
/// plus every time at which the curve can kink: inflow knots, crossings of the delay
/// breakpoints, and the exit times of earlier kinks (where the outflow term kinks). With all
/// kinks visited the piecewise-linear curve is exact. Users inside an atom are ordered, the
/// `k`-th seeing the volume of the `k - 1` ahead of it.
fn arc_performance_curve(delay: &DelayFunction, substeps: usize, inflow: &CumulativeFlow) -> ExitTimeCurve {
    let d_min = delay.d_min();
    let Some((first, last_knot)) = inflow.support() else {
        return ExitTimeCurve::free_flow(d_min);
    };
    let total = inflow.total();
    let step = d_min / substeps as f64;
    let empty_tol = 1e-13 * (1.0 + total);

    let mut heap: BinaryHeap<Candidate> =
        inflow.knots().iter().map(|k| Candidate { time: k.time, kink: true }).collect();
    let mut points: Vec<ExitPoint> = Vec::new();
    let mut cursor = 0usize;
    let mut block = 0u64;
    let mut grid_index = 1u64;
    let mut prev: Option<(f64, f64)> = None; // (entry, volume just after it)

    loop {
        let block_end = first + (block + 1) as f64 * d_min;
        let grid_time = first + grid_index as f64 * step;
        let next = match heap.peek() {
            Some(c) if c.time <= grid_time => heap.pop().unwrap(),
            _ => {
                grid_index += 1;
                Candidate { time: grid_time, kink: false }
            }
        };
        let h = next.time;
        if h > block_end {
            block += 1;
        }
        if let Some((ph, _)) = prev {
            if h <= ph + 1e-12 * (1.0 + ph.abs()) {
                // coincides with the last visited time
                if next.kink {
                    if let Some(p) = points.last() {
                        heap.push(Candidate { time: p.exit, kink: true });
                    }
                }
                continue;
            }
        }

        let n_left = inflow.left_limit(h);
        let n_right = inflow.value_at(h);
        let out = exited_by(&points, &mut cursor, h);
        let v_left = (n_left - out).max(0.0);

        // kinks from the volume crossing a delay breakpoint since the previous time
        if let Some((ph, pv)) = prev {
            let mut crossings: Vec<f64> = if pv <= v_left {
                delay.kinks_between(pv, v_left).collect()
            } else {
                let mut c: Vec<f64> = delay.kinks_between(v_left, pv).collect();
                c.reverse();
                c
            };
            crossings.dedup();
            for v in crossings {
                let hx = ph + (v - pv) / (v_left - pv) * (h - ph);
                if hx > ph && hx < h {
                    let e = hx + delay.eval(v);
                    points.push(ExitPoint { entry: hx, mass: inflow.value_at(hx), exit: e });
                    heap.push(Candidate { time: e, kink: true });
                }
            }
        }

        let e = h + delay.eval(v_left);
        points.push(ExitPoint { entry: h, mass: n_left, exit: e });
        if next.kink {
            heap.push(Candidate { time: e, kink: true });
        }
        let mut v_right = v_left;
        if n_right > n_left {
            // atom: users queue up inside it, each seeing those ahead of it
            v_right = v_left + (n_right - n_left);
            for v in delay.kinks_between(v_left, v_right) {
                let e = h + delay.eval(v);
                points.push(ExitPoint { entry: h, mass: n_left + (v - v_left), exit: e });
                heap.push(Candidate { time: e, kink: true });
            }
            let e = h + delay.eval(v_right);
            points.push(ExitPoint { entry: h, mass: n_right, exit: e });
            heap.push(Candidate { time: e, kink: true });
        }
        prev = Some((h, v_right));

        if h >= last_knot && v_right <= empty_tol {
            break;
        }
    }
    // flat stretches (outflow at rate exactly 1 / D') come out with rounding-level dips
    for i in 1..points.len() {
        let prev = points[i - 1].exit;
        if points[i].exit < prev && prev - points[i].exit <= 1e-12 * (1.0 + prev.abs()) {
            points[i].exit = prev;
        }
    }
    ExitTimeCurve::from_sorted(points)
}

/// Departure curve of a point queue with capacity `capacity` fed by `arrivals` shifted by
/// `lag`: `D(τ) = min_{s<=τ} [A(s-) + K (τ - s)]`, as a continuous polyline.
fn departure_curve(inflow: &CumulativeFlow, lag: f64, capacity: f64) -> Vec<(f64, f64)> {
    let knots = inflow.knots();
    let total = inflow.total();
    let tol = 1e-14 * (1.0 + total);
    let mut dep: Vec<(f64, f64)> = vec![(knots[0].time + lag, 0.0)];
    let mut served = 0.0;
    for (i, k) in knots.iter().enumerate() {
        let mut t = k.time + lag;
        let mut arrived = k.value;
        let rate = k.slope;
        let next = knots.get(i + 1).map(|n| n.time + lag);
        loop {
            let queue = arrived - served;
            if queue <= tol {
                served = served.max(arrived.min(served + queue.max(0.0)));
                match next {
                    Some(nt) if rate <= capacity => {
                        // free flow: departures track arrivals exactly
                        served = inflow.left_limit(knots[i + 1].time);
                        dep.push((nt, served));
                    }
                    Some(nt) => {
                        served += capacity * (nt - t);
                        dep.push((nt, served));
                    }
                    None => {}
                }
                break;
            }
            if rate < capacity {
                let drained = t + queue / (capacity - rate);
                if next.is_none_or(|nt| drained < nt) {
                    arrived += rate * (drained - t);
                    served = arrived;
                    t = drained;
                    dep.push((t, served));
                    continue;
                }
            }
            if let Some(nt) = next {
                served += capacity * (nt - t);
                dep.push((nt, served));
            }
            break;
        }
    }
    dep
}

/// Earliest time the departure polyline reaches `mass`.
fn first_reach(dep: &[(f64, f64)], mass: f64) -> f64 {
    // a breakpoint within rounding of `mass` counts as reaching it
    let tol = 1e-12 * (1.0 + mass.abs());
    let j = dep.partition_point(|d| d.1 < mass - tol);
    if j == 0 {
        return dep[0].0;
    }
    match dep.get(j) {
        Some(&(t1, v1)) => {
            let (t0, v0) = dep[j - 1];
            (t0 + (t1 - t0) * (mass - v0) / (v1 - v0)).clamp(t0, t1)
        }
        None => dep[dep.len() - 1].0,
    }
}

/// Exit curve of a point-queue bottleneck: `H(h) = max(h + c, D^-1(N(h)))`.
///
/// Built in closed form on the cumulative curves. The curve is sampled at every inflow knot,
/// at the entry time matching each departure-curve breakpoint, and at the user index matching
/// each departure-curve breakpoint, which together contain all of its kinks. An atom is
/// released at capacity, so it becomes a vertical run.
fn bottleneck_curve(lag: f64, capacity: f64, inflow: &CumulativeFlow) -> ExitTimeCurve {
    let Some((first, _)) = inflow.support() else {
        return ExitTimeCurve::free_flow(lag);
    };
    let total = inflow.total();
    let dep = departure_curve(inflow, lag, capacity);

    let mut cands: Vec<(f64, f64)> = Vec::with_capacity(inflow.knots().len() * 2 + dep.len() * 2);
    for k in inflow.knots() {
        let left = inflow.left_limit(k.time);
        cands.push((k.time, left));
        if k.value > left {
            cands.push((k.time, k.value));
        }
    }
    for &(tau, d) in &dep {
        let h = tau - lag;
        if h >= first {
            cands.push((h, inflow.value_at(h)));
        }
        if let Some(hm) = inflow.inverse(d) {
            let left = inflow.left_limit(hm);
            let right = inflow.value_at(hm);
            let n = if right > left { d.clamp(left, right) } else { right };
            cands.push((hm, n));
        }
    }
    let time_tol = |h: f64| 1e-12 * (1.0 + h.abs());
    // computed times within rounding of an inflow knot take the knot's exact time
    let knot_times: Vec<f64> = inflow.knots().iter().map(|k| k.time).collect();
    for c in cands.iter_mut() {
        let i = knot_times.partition_point(|&t| t < c.0);
        for &t in knot_times[i.saturating_sub(1)..(i + 1).min(knot_times.len())].iter() {
            if (t - c.0).abs() <= time_tol(t) {
                c.0 = t;
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mass_tol = 1e-12 * (1.0 + total);
    let mut points: Vec<ExitPoint> = Vec::with_capacity(cands.len());
    for (h, n) in cands {
        let (h, n) = match points.last() {
            Some(p) if (h - p.entry).abs() <= time_tol(h) => {
                if (n - p.mass).abs() <= mass_tol {
                    continue;
                }
                (p.entry, n.max(p.mass))
            }
            Some(p) => (h, n.max(p.mass)),
            None => (h, n),
        };
        let exit = (h + lag).max(first_reach(&dep, n));
        points.push(ExitPoint { entry: h, mass: n, exit });
    }
    ExitTimeCurve::from_sorted(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn constant_model_shifts() {
        let m = ArcModel::constant(1.0).unwrap();
        let inflow = CumulativeFlow::from_rates(&[(0.0, 2.0, 3.0)]).unwrap();
        let c = m.exit_curve(&inflow).unwrap();
        for h in [-1.0, 0.0, 0.3, 2.0, 5.0] {
            assert_eq!(c.eval(h), h + 1.0);
        }
        assert_eq!(travel_time(&m, &inflow, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn model_parameters_are_checked() {
        assert!(ArcModel::constant(0.0).is_err());
        assert!(ArcModel::bottleneck(0.0, 1.0).is_err());
        assert!(ArcModel::bottleneck(1.0, 0.0).is_err());
        assert!(DelayFunction::new(vec![(0.0, 0.0), (1.0, 1.0)]).is_err());
        assert!(DelayFunction::new(vec![(0.0, 1.0), (1.0, 1.0)]).is_err());
        let bad = ArcModel::Bottleneck { free_flow_time: -1.0, capacity: 1.0 };
        assert!(matches!(bad.exit_curve(&CumulativeFlow::zero()), Err(Error::ModelParameter(_))));
    }

    #[test]
    fn delay_function_evaluates_and_extrapolates() {
        let d = DelayFunction::new(vec![(0.0, 1.0), (2.0, 2.0), (4.0, 5.0)]).unwrap();
        assert_eq!(d.eval(0.0), 1.0);
        assert_eq!(d.eval(1.0), 1.5);
        assert_eq!(d.eval(3.0), 3.5);
        assert_eq!(d.eval(6.0), 8.0);
        assert_eq!(d.eval(-1.0), 1.0);
    }

    #[test]
    fn arc_performance_atom() {
        // D(v) = 1 + v, one user-mass at h = 0: the last user of the atom sees V = 1
        let m = ArcModel::arc_performance(DelayFunction::affine(1.0, 1.0).unwrap());
        let c = m.exit_curve(&CumulativeFlow::atom(0.0, 1.0)).unwrap();
        assert!(close(c.eval(0.0), 2.0, 1e-12));
        assert!(close(c.eval_left(0.0), 1.0, 1e-12));
        // the arc has emptied by t = 2
        assert!(close(c.eval(2.5), 3.5, 1e-12));
    }

    #[test]
    fn arc_performance_zero_inflow_is_free_flow() {
        let m = ArcModel::arc_performance(DelayFunction::affine(1.0, 1.0).unwrap());
        let c = m.exit_curve(&CumulativeFlow::zero()).unwrap();
        for h in [0.0, 1.0, 7.5] {
            assert_eq!(c.travel_time(h), 1.0);
        }
    }

    #[test]
    fn arc_performance_uniform_first_block_is_linear() {
        // rate 1 on [0, 4], D(v) = 1 + v: for h <= 1 nobody has left, V = h
        let m = ArcModel::arc_performance(DelayFunction::affine(1.0, 1.0).unwrap());
        let c = m.exit_curve(&CumulativeFlow::uniform(0.0, 4.0, 1.0)).unwrap();
        for h in [0.0, 0.25, 0.5, 1.0] {
            assert!(close(c.eval(h), 1.0 + 2.0 * h, 1e-12), "h={h}");
        }
        // on the second block Out(h) = (h - 1) / 2, so V = (h + 1) / 2
        for h in [1.5, 2.0, 3.0] {
            assert!(close(c.eval(h), h + 1.0 + (h + 1.0) / 2.0, 1e-12), "h={h}");
        }
    }

    #[test]
    fn bottleneck_rate_two() {
        let m = ArcModel::bottleneck(1.0, 1.0).unwrap();
        let inflow = CumulativeFlow::uniform(0.0, 1.0, 2.0);
        let c = m.exit_curve(&inflow).unwrap();
        for i in 0..=20 {
            let h = i as f64 / 20.0;
            assert!(close(c.eval(h), 1.0 + 2.0 * h, 1e-12), "h={h}");
        }
        assert!(close(c.eval(1.0), 3.0, 1e-12));
        assert!(close(travel_time(&m, &inflow, 1.0).unwrap(), 2.0, 1e-12));
        // after the queue drains at t = 3, entrants at h >= 2 see free flow
        assert!(close(c.eval(2.5), 3.5, 1e-12));
        // entrants in ]1, 2[ wait behind the queue
        assert!(close(c.eval(1.5), 3.0, 1e-12));
    }

    #[test]
    fn bottleneck_spreads_atom() {
        let m = ArcModel::bottleneck(1.0, 1.0).unwrap();
        let c = m.exit_curve(&CumulativeFlow::atom(0.0, 2.0)).unwrap();
        assert!(close(c.eval_left(0.0), 1.0, 1e-12));
        assert!(close(c.eval(0.0), 3.0, 1e-12));
        let out = CumulativeFlow::atom(0.0, 2.0).pushforward(&c).unwrap();
        assert!(close(out.value_at(2.0), 1.0, 1e-12));
        assert!(close(out.total(), 2.0, 0.0));
    }

    #[test]
    fn bottleneck_below_capacity_is_free_flow() {
        let m = ArcModel::bottleneck(0.5, 2.0).unwrap();
        let c = m.exit_curve(&CumulativeFlow::uniform(0.0, 3.0, 1.5)).unwrap();
        for h in [0.0, 1.0, 2.9, 4.0] {
            assert!(close(c.travel_time(h), 0.5, 1e-12));
        }
    }
}
