//! Finite measures on the time axis, stored as cumulative curves.
//!
//! A [`CumulativeFlow`] is the map `t -> N(t) = Y(]-inf, t])`. It is right-continuous,
//! piecewise linear between knots (so the density is piecewise constant) and may jump at a
//! knot, which encodes an atom. Every operation here is a pure function of its inputs.

use crate::arc::ExitTimeCurve;
use crate::error::{Error, Result};

/// Knots closer than this are merged when a curve is assembled from computed points.
pub const MERGE_TOLERANCE: f64 = 1e-9;

/// One knot of a cumulative curve.
///
/// `value` is the right-continuous value `N(time)`; `slope` is the density on
/// `[time, next knot)`. The left limit at the next knot is `value + slope * dt`, so the jump
/// there is whatever remains up to that knot's `value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knot {
    pub time: f64,
    pub value: f64,
    pub slope: f64,
}

impl Knot {
    pub fn new(time: f64, value: f64, slope: f64) -> Self {
        Self { time, value, slope }
    }

    #[inline]
    fn eval(&self, t: f64) -> f64 {
        self.value + self.slope * (t - self.time)
    }
}

/// A finite measure on the real line: atoms plus piecewise-constant densities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CumulativeFlow {
    knots: Vec<Knot>,
}

/// The horizon `[0, end]` in which route inflows live.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizon {
    end: f64,
}

impl Horizon {
    pub fn new(end: f64) -> Result<Self> {
        if end.is_finite() && end > 0.0 {
            Ok(Self { end })
        } else {
            Err(Error::Validation(format!("horizon end must be positive, got {end}")))
        }
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn contains(&self, t: f64) -> bool {
        (0.0..=self.end).contains(&t)
    }
}

impl CumulativeFlow {
    pub fn zero() -> Self {
        Self { knots: Vec::new() }
    }

    /// Builds a curve from explicit knots, checking every representation invariant.
    pub fn from_knots(knots: Vec<Knot>) -> Result<Self> {
        for (i, k) in knots.iter().enumerate() {
            if !(k.time.is_finite() && k.value.is_finite() && k.slope.is_finite()) {
                return Err(Error::InvalidFlow(format!("non-finite knot {k:?}")));
            }
            if k.slope < 0.0 {
                return Err(Error::InvalidFlow(format!("negative density at t={}", k.time)));
            }
            match knots.get(i + 1) {
                Some(next) => {
                    if next.time <= k.time {
                        return Err(Error::InvalidFlow(format!(
                            "knot times must be strictly increasing ({} then {})",
                            k.time, next.time
                        )));
                    }
                    let left = k.eval(next.time);
                    if next.value < left - 1e-12 * (1.0 + left.abs()) {
                        return Err(Error::InvalidFlow(format!("cumulative mass decreases at t={}", next.time)));
                    }
                }
                None => {
                    if k.slope != 0.0 {
                        return Err(Error::InvalidFlow("last knot must carry zero density (finite mass)".into()));
                    }
                }
            }
        }
        if let Some(first) = knots.first() {
            if first.value < 0.0 {
                return Err(Error::InvalidFlow("negative initial mass".into()));
            }
        }
        Ok(Self { knots })
    }

    /// A single atom of `mass` users at `time`.
    pub fn atom(time: f64, mass: f64) -> Self {
        if mass <= 0.0 {
            return Self::zero();
        }
        Self { knots: vec![Knot::new(time, mass, 0.0)] }
    }

    /// Constant density `rate` on `[start, end]`.
    pub fn uniform(start: f64, end: f64, rate: f64) -> Self {
        if rate <= 0.0 || end <= start {
            return Self::zero();
        }
        Self { knots: vec![Knot::new(start, 0.0, rate), Knot::new(end, rate * (end - start), 0.0)] }
    }

    /// Piecewise-constant density from `(start, end, rate)` segments, given in time order and
    /// non-overlapping.
    pub fn from_rates(segments: &[(f64, f64, f64)]) -> Result<Self> {
        let mut knots: Vec<Knot> = Vec::new();
        let mut mass = 0.0;
        let mut last_end = f64::NEG_INFINITY;
        for &(start, end, rate) in segments {
            if !(start.is_finite() && end.is_finite() && rate.is_finite()) {
                return Err(Error::InvalidFlow("non-finite rate segment".into()));
            }
            if rate < 0.0 {
                return Err(Error::InvalidFlow(format!("negative rate {rate}")));
            }
            if end < start {
                return Err(Error::InvalidFlow(format!("segment [{start}, {end}] is reversed")));
            }
            if start < last_end {
                return Err(Error::InvalidFlow("rate segments overlap or are unordered".into()));
            }
            last_end = end;
            if rate == 0.0 || end == start {
                continue;
            }
            match knots.last_mut() {
                Some(k) if k.time == start => k.slope = rate,
                _ => knots.push(Knot::new(start, mass, rate)),
            }
            mass += rate * (end - start);
            knots.push(Knot::new(end, mass, 0.0));
        }
        Ok(Self { knots })
    }

    /// Assembles a curve from a polyline of `(time, cumulative)` points in time order.
    /// Repeated times encode jumps; points closer than [`MERGE_TOLERANCE`] are merged onto
    /// the earlier time.
    pub fn from_points(points: &[(f64, f64)]) -> Result<Self> {
        let mut clusters: Vec<(f64, f64, f64)> = Vec::new(); // (time, first value, last value)
        for &(t, v) in points {
            if !(t.is_finite() && v.is_finite()) {
                return Err(Error::InvalidFlow("non-finite polyline point".into()));
            }
            match clusters.last_mut() {
                Some(c) if t - c.0 <= MERGE_TOLERANCE => {
                    if t < c.0 - MERGE_TOLERANCE {
                        return Err(Error::InvalidFlow("polyline times decrease".into()));
                    }
                    c.2 = c.2.max(v);
                }
                Some(c) if t < c.0 => {
                    return Err(Error::InvalidFlow("polyline times decrease".into()));
                }
                _ => clusters.push((t, v, v)),
            }
        }
        // Drop the leading zero-mass points, and everything after the total is reached.
        let Some(start) = clusters.iter().position(|c| c.2 > 0.0) else {
            return Ok(Self::zero());
        };
        let start = if start > 0 && clusters[start].1 > 0.0 { start - 1 } else { start };
        let clusters = &clusters[start..];
        let total = clusters.last().map(|c| c.2).unwrap_or(0.0);
        let end = clusters.iter().position(|c| c.2 >= total).unwrap_or(clusters.len() - 1);
        let clusters = &clusters[..=end];

        let mut knots = Vec::with_capacity(clusters.len());
        let mut running = 0.0_f64;
        for (i, c) in clusters.iter().enumerate() {
            let value = c.2.max(running);
            running = value;
            let slope = match clusters.get(i + 1) {
                Some(next) => ((next.1.max(value) - value) / (next.0 - c.0)).max(0.0),
                None => 0.0,
            };
            knots.push(Knot::new(c.0, value, slope));
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    pub fn is_zero(&self) -> bool {
        self.total() <= 0.0
    }

    /// Total mass `Y(R)`.
    pub fn total(&self) -> f64 {
        self.knots.last().map(|k| k.value).unwrap_or(0.0)
    }

    /// First and last knot times, if the curve carries any knot.
    pub fn support(&self) -> Option<(f64, f64)> {
        Some((self.knots.first()?.time, self.knots.last()?.time))
    }

    /// Index of the last knot with `time <= t`.
    fn segment(&self, t: f64) -> Option<usize> {
        self.knots.partition_point(|k| k.time <= t).checked_sub(1)
    }

    /// `N(t) = Y(]-inf, t])`.
    pub fn value_at(&self, t: f64) -> f64 {
        match self.segment(t) {
            Some(i) => self.knots[i].eval(t),
            None => 0.0,
        }
    }

    /// `N(t-) = Y(]-inf, t[)`.
    pub fn left_limit(&self, t: f64) -> f64 {
        match self.knots.partition_point(|k| k.time < t).checked_sub(1) {
            Some(i) => self.knots[i].eval(t),
            None => 0.0,
        }
    }

    /// Mass of the atom at `t` (zero when `t` is not a knot).
    pub fn atom_at(&self, t: f64) -> f64 {
        (self.value_at(t) - self.left_limit(t)).max(0.0)
    }

    /// Density on the segment starting at or before `t`.
    pub fn density_at(&self, t: f64) -> f64 {
        match self.segment(t) {
            Some(i) => self.knots[i].slope,
            None => 0.0,
        }
    }

    /// `Y(]from, to])`; zero for an empty interval.
    pub fn measure_of(&self, from: f64, to: f64) -> f64 {
        if to <= from {
            return 0.0;
        }
        (self.value_at(to) - self.value_at(from)).max(0.0)
    }

    /// Smallest `t` with `N(t) >= mass`; `None` when the total never reaches `mass`.
    pub fn inverse(&self, mass: f64) -> Option<f64> {
        let first = self.knots.first()?;
        if mass <= 0.0 {
            return Some(first.time);
        }
        let i = self.knots.partition_point(|k| k.value < mass);
        let k = self.knots.get(i)?;
        if i == 0 {
            return Some(k.time);
        }
        let prev = &self.knots[i - 1];
        let left = prev.eval(k.time);
        if left >= mass && prev.slope > 0.0 {
            Some((prev.time + (mass - prev.value) / prev.slope).min(k.time))
        } else {
            Some(k.time)
        }
    }

    /// The restriction `M|_h`: `M|_h(J) = M(J ∩ ]-inf, h])`.
    pub fn restrict(&self, h: f64) -> Self {
        let n = self.knots.partition_point(|k| k.time <= h);
        if n == 0 {
            return Self::zero();
        }
        if n == self.knots.len() {
            return self.clone();
        }
        let mut knots = self.knots[..n].to_vec();
        let last = knots[n - 1];
        if last.time == h {
            knots[n - 1].slope = 0.0;
        } else {
            knots.push(Knot::new(h, last.eval(h), 0.0));
        }
        Self { knots }
    }

    /// Pointwise sum of cumulative curves.
    pub fn sum<'a, I>(flows: I) -> Self
    where
        I: IntoIterator<Item = &'a CumulativeFlow>,
    {
        let flows: Vec<&CumulativeFlow> = flows.into_iter().filter(|f| !f.knots.is_empty()).collect();
        match flows.len() {
            0 => return Self::zero(),
            1 => return flows[0].clone(),
            _ => {}
        }
        let mut times: Vec<f64> = flows.iter().flat_map(|f| f.knots.iter().map(|k| k.time)).collect();
        times.sort_by(f64::total_cmp);

        // Cluster nearby knot times; each cluster becomes one knot at its first time that
        // carries the mass accumulated through its last time.
        let mut clusters: Vec<(f64, f64)> = Vec::new();
        for t in times {
            match clusters.last_mut() {
                Some(c) if t - c.0 <= MERGE_TOLERANCE => c.1 = t,
                _ => clusters.push((t, t)),
            }
        }
        let mut knots = Vec::with_capacity(clusters.len());
        for (i, &(first, last)) in clusters.iter().enumerate() {
            let value: f64 = flows.iter().map(|f| f.value_at(last)).sum();
            let slope = if i + 1 == clusters.len() { 0.0 } else { flows.iter().map(|f| f.density_at(last)).sum() };
            knots.push(Knot::new(first, value, slope));
        }
        Self { knots }
    }

    /// The measure multiplied by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        if factor <= 0.0 {
            return Self::zero();
        }
        Self { knots: self.knots.iter().map(|k| Knot::new(k.time, k.value * factor, k.slope * factor)).collect() }
    }

    /// Pushforward through a monotone exit map: `result(J) = self(map^-1(J))`.
    ///
    /// Atoms sitting on a vertical run of the map are released along the run in proportion
    /// to the run's own mass coordinate. Positive mass sent backwards in time, or collapsed
    /// onto a single exit time from distinct entry times, is a [`Error::FifoViolation`].
    pub fn pushforward(&self, map: &ExitTimeCurve) -> Result<Self> {
        let Some((start, end)) = self.support() else {
            return Ok(Self::zero());
        };
        let mut times: Vec<f64> = self.knots.iter().map(|k| k.time).collect();
        times.extend(map.points().iter().map(|p| p.entry).filter(|&h| h > start && h < end));
        times.sort_by(f64::total_cmp);
        times.dedup();

        // (entry, exit, cumulative mass) along the completed graph of the map
        let mut params: Vec<(f64, f64, f64)> = Vec::with_capacity(times.len() + 8);
        for &h in &times {
            let fl = self.left_limit(h);
            let fr = self.value_at(h);
            let run = map.run_at(h);
            if run.len() >= 2 {
                let n0 = run[0].mass;
                let n1 = run[run.len() - 1].mass;
                for (k, p) in run.iter().enumerate() {
                    let frac = if n1 > n0 {
                        ((p.mass - n0) / (n1 - n0)).clamp(0.0, 1.0)
                    } else if k + 1 == run.len() {
                        1.0
                    } else {
                        0.0
                    };
                    params.push((h, p.exit, fl + frac * (fr - fl)));
                }
            } else {
                let e = map.eval(h);
                params.push((h, e, fl));
                if fr > fl {
                    params.push((h, e, fr));
                }
            }
        }

        let total = self.total();
        let mass_tol = 1e-14 * (1.0 + total);
        let mut points: Vec<(f64, f64)> = Vec::with_capacity(params.len());
        let mut latest = f64::NEG_INFINITY;
        for w in params.windows(2) {
            let (ha, ea, fa) = w[0];
            let (hb, eb, fb) = w[1];
            if fb - fa <= mass_tol {
                continue;
            }
            let time_tol = 1e-12 * (1.0 + ea.abs());
            if eb < ea - time_tol || (hb > ha && eb <= ea) {
                return Err(Error::FifoViolation {
                    entry: ha,
                    detail: format!("entries {ha}..{hb} carrying mass {} map to exits {ea}..{eb}", fb - fa),
                });
            }
            if ea < latest - time_tol {
                return Err(Error::FifoViolation {
                    entry: ha,
                    detail: format!("exit {ea} precedes an earlier entrant's exit {latest}"),
                });
            }
            let ea = ea.max(latest);
            let eb = eb.max(ea);
            points.push((ea, fa));
            points.push((eb, fb));
            latest = eb;
        }
        if points.is_empty() {
            return Ok(Self::zero());
        }
        // pin the total: the last cumulative value is the input total
        if let Some(last) = points.last_mut() {
            last.1 = total;
        }
        Self::from_points(&points)
    }

    /// Mass-weighted mean time `∫ t dY / Y(R)`, or `None` for the zero measure.
    pub fn mean_time(&self) -> Option<f64> {
        let total = self.total();
        if total <= 0.0 {
            return None;
        }
        let mut moment = 0.0;
        let mut left = 0.0;
        for (i, k) in self.knots.iter().enumerate() {
            moment += k.time * (k.value - left);
            if let Some(next) = self.knots.get(i + 1) {
                moment += k.slope * 0.5 * (next.time * next.time - k.time * k.time);
                left = k.eval(next.time);
            }
        }
        Some(moment / total)
    }

    /// Sup-norm distance between two cumulative curves.
    pub fn linf_distance(&self, other: &Self) -> f64 {
        self.distance_until(other, f64::INFINITY)
    }

    /// Sup-norm distance restricted to times `<= until`.
    pub fn distance_until(&self, other: &Self, until: f64) -> f64 {
        let mut worst: f64 = 0.0;
        let mut probe = |t: f64| {
            if t <= until {
                worst = worst.max((self.value_at(t) - other.value_at(t)).abs());
                worst = worst.max((self.left_limit(t) - other.left_limit(t)).abs());
            }
        };
        for k in self.knots.iter().chain(other.knots.iter()) {
            probe(k.time);
        }
        if until.is_finite() {
            worst = worst.max((self.value_at(until) - other.value_at(until)).abs());
        }
        worst
    }
}
