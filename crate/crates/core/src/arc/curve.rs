use crate::error::{Error, Result};

/// One point of an exit-time curve.
///
/// `mass` is the cumulative inflow index of the user at this point. It only matters on a
/// vertical run (several points sharing one entry time), where it says how an atom is
/// released across the run's exit times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitPoint {
    pub entry: f64,
    pub mass: f64,
    pub exit: f64,
}

/// Entry time to exit time map `H(h) = h + t(h)` of one arc under a given inflow.
///
/// Piecewise linear between points. Outside the stored points the arc is empty, so the map
/// extends with slope one from the first and last point.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitTimeCurve {
    points: Vec<ExitPoint>,
}

impl ExitTimeCurve {
    pub fn new(points: Vec<ExitPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::ModelParameter("exit-time curve needs at least one point".into()));
        }
        for w in points.windows(2) {
            let (a, b) = (w[0], w[1]);
            if !(a.entry.is_finite() && a.exit.is_finite() && a.mass.is_finite()) {
                return Err(Error::ModelParameter(format!("non-finite exit point {a:?}")));
            }
            if b.entry < a.entry {
                return Err(Error::ModelParameter(format!(
                    "exit-curve entries must be sorted ({} then {})",
                    a.entry, b.entry
                )));
            }
            if b.mass < a.mass - 1e-9 * (1.0 + a.mass.abs()) {
                return Err(Error::ModelParameter(format!("exit-curve mass index decreases at entry {}", b.entry)));
            }
        }
        Ok(Self { points })
    }

    pub(crate) fn from_sorted(points: Vec<ExitPoint>) -> Self {
        debug_assert!(!points.is_empty());
        Self { points }
    }

    /// `H(h) = h + travel` everywhere.
    pub fn free_flow(travel: f64) -> Self {
        Self { points: vec![ExitPoint { entry: 0.0, mass: 0.0, exit: travel }] }
    }

    pub fn points(&self) -> &[ExitPoint] {
        &self.points
    }

    /// Right-continuous evaluation: at an atom this is the exit of its last user.
    pub fn eval(&self, h: f64) -> f64 {
        let i = self.points.partition_point(|p| p.entry <= h);
        self.interpolate(i, h)
    }

    /// Left limit `H(h-)`: at an atom this is the exit of its first user.
    pub fn eval_left(&self, h: f64) -> f64 {
        let i = self.points.partition_point(|p| p.entry < h);
        if let Some(p) = self.points.get(i) {
            if p.entry == h {
                return p.exit;
            }
        }
        self.interpolate(i, h)
    }

    fn interpolate(&self, i: usize, h: f64) -> f64 {
        let first = self.points[0];
        let last = self.points[self.points.len() - 1];
        if i == 0 {
            return first.exit + (h - first.entry);
        }
        if i == self.points.len() {
            return last.exit + (h - last.entry);
        }
        let p = self.points[i - 1];
        let q = self.points[i];
        if p.entry == h || q.entry == p.entry {
            return p.exit;
        }
        p.exit + (q.exit - p.exit) * (h - p.entry) / (q.entry - p.entry)
    }

    /// `H(h) - h`.
    pub fn travel_time(&self, h: f64) -> f64 {
        self.eval(h) - h
    }

    /// Points whose entry time is exactly `h` (a vertical run when there are two or more).
    pub fn run_at(&self, h: f64) -> &[ExitPoint] {
        let lo = self.points.partition_point(|p| p.entry < h);
        let hi = self.points.partition_point(|p| p.entry <= h);
        &self.points[lo..hi]
    }

    /// Smallest entry time whose exit reaches `exit`, assuming a nondecreasing map.
    pub fn preimage(&self, exit: f64) -> f64 {
        let first = self.points[0];
        if first.exit >= exit {
            return first.entry - (first.exit - exit);
        }
        let i = self.points.partition_point(|p| p.exit < exit);
        match self.points.get(i) {
            None => {
                let last = self.points[self.points.len() - 1];
                last.entry + (exit - last.exit)
            }
            Some(q) => {
                let p = self.points[i - 1];
                if q.entry == p.entry {
                    q.entry
                } else {
                    p.entry + (exit - p.exit) / (q.exit - p.exit) * (q.entry - p.entry)
                }
            }
        }
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].exit >= w[0].exit)
    }

    /// Last stored entry time; beyond it the arc runs at free flow.
    pub fn last_entry(&self) -> f64 {
        self.points[self.points.len() - 1].entry
    }
}
