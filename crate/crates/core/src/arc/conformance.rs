use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::curve::ExitTimeCurve;
use super::models::TravelTimeModel;
use crate::measure::CumulativeFlow;

/// Structural properties a travel-time model must have for loading to be well posed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Assumption {
    Continuity,
    NoInfiniteSpeed,
    Finiteness,
    StrictFifo,
    Causality,
}

impl Assumption {
    pub const ALL: [Assumption; 5] = [
        Assumption::Continuity,
        Assumption::NoInfiniteSpeed,
        Assumption::Finiteness,
        Assumption::StrictFifo,
        Assumption::Causality,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Assumption::Continuity => "continuity",
            Assumption::NoInfiniteSpeed => "no_infinite_speed",
            Assumption::Finiteness => "finiteness",
            Assumption::StrictFifo => "strict_fifo",
            Assumption::Causality => "causality",
        }
    }
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    pub assumption: Assumption,
    pub passed: bool,
    /// Largest violation seen (0 when none).
    pub worst: f64,
    /// Number of probes that failed.
    pub failures: usize,
    /// Description of the first failure.
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformanceReport {
    pub probes: usize,
    pub checks: Vec<AssumptionCheck>,
}

impl ConformanceReport {
    pub fn check(&self, a: Assumption) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.assumption == a)
    }

    pub fn passed(&self, a: Assumption) -> bool {
        self.check(a).is_some_and(|c| c.passed)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Tally {
    assumption: Assumption,
    worst: f64,
    failures: usize,
    detail: String,
}

impl Tally {
    fn new(assumption: Assumption) -> Self {
        Self { assumption, worst: 0.0, failures: 0, detail: String::new() }
    }

    fn fail(&mut self, amount: f64, detail: impl FnOnce() -> String) {
        if self.failures == 0 {
            self.detail = detail();
        }
        self.failures += 1;
        if amount > self.worst || amount.is_nan() {
            self.worst = amount;
        }
    }

    fn finish(self) -> AssumptionCheck {
        AssumptionCheck {
            assumption: self.assumption,
            passed: self.failures == 0,
            worst: self.worst,
            failures: self.failures,
            detail: self.detail,
        }
    }
}

fn random_inflow(rng: &mut ChaCha8Rng, horizon: f64, rate: f64) -> CumulativeFlow {
    let segments = rng.gen_range(1..=4);
    let mut cuts: Vec<f64> = (0..2 * segments).map(|_| rng.gen_range(0.0..horizon)).collect();
    cuts.sort_by(f64::total_cmp);
    let mut parts: Vec<CumulativeFlow> = cuts
        .chunks(2)
        .filter(|c| c[1] > c[0])
        .map(|c| CumulativeFlow::uniform(c[0], c[1], rate * rng.gen_range(0.2..2.0)))
        .collect();
    if rng.gen_bool(0.5) {
        parts.push(CumulativeFlow::atom(rng.gen_range(0.0..horizon), rate * rng.gen_range(0.1..1.0)));
    }
    if parts.is_empty() {
        parts.push(CumulativeFlow::uniform(0.0, horizon, rate));
    }
    CumulativeFlow::sum(parts.iter())
}

fn sample_times(inflow: &CumulativeFlow, horizon: f64, t_max: f64) -> Vec<f64> {
    let end = horizon + t_max;
    let mut ts: Vec<f64> = inflow.knots().iter().map(|k| k.time).collect();
    ts.extend((0..=48).map(|i| -0.5 + (end + 0.5) * i as f64 / 48.0));
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

fn curve_gap(a: &ExitTimeCurve, b: &ExitTimeCurve, ts: &[f64]) -> f64 {
    ts.iter().map(|&t| (a.eval(t) - b.eval(t)).abs().max((a.eval_left(t) - b.eval_left(t)).abs())).fold(0.0, f64::max)
}

/// Probes `model` with `probes` seeded random inflows on `[0, horizon]` and reports which of
/// the structural assumptions it satisfies on them. Model errors count as failures.
pub fn check_assumptions(model: &dyn TravelTimeModel, probes: usize, seed: u64, horizon: f64) -> ConformanceReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut continuity = Tally::new(Assumption::Continuity);
    let mut speed = Tally::new(Assumption::NoInfiniteSpeed);
    let mut finite = Tally::new(Assumption::Finiteness);
    let mut fifo = Tally::new(Assumption::StrictFifo);
    let mut causal = Tally::new(Assumption::Causality);
    let t_min = model.t_min();

    for probe in 0..probes {
        let inflow = random_inflow(&mut rng, horizon, model.probe_rate());
        let total = inflow.total();
        let t_max = model.t_max(total);
        let curve = match model.exit_curve(&inflow) {
            Ok(c) => c,
            Err(e) => {
                for t in [&mut continuity, &mut speed, &mut finite, &mut fifo, &mut causal] {
                    t.fail(f64::INFINITY, || format!("probe {probe}: {e}"));
                }
                continue;
            }
        };
        let ts = sample_times(&inflow, horizon, t_max);

        // small perturbations must move the curve by a proportionally small amount
        let d1 =
            model.exit_curve(&inflow.scaled(1.0 + 1e-6)).map(|c| curve_gap(&curve, &c, &ts)).unwrap_or(f64::INFINITY);
        let d2 =
            model.exit_curve(&inflow.scaled(1.0 + 1e-7)).map(|c| curve_gap(&curve, &c, &ts)).unwrap_or(f64::INFINITY);
        if !(d1 <= 1e-3 && d2 <= 0.5 * d1 + 1e-9) {
            continuity.fail(d1, || format!("probe {probe}: perturbation 1e-6 moved H by {d1:e}, 1e-7 by {d2:e}"));
        }

        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &t in &ts {
            for tt in [curve.eval(t) - t, curve.eval_left(t) - t] {
                lo = lo.min(tt);
                hi = hi.max(tt);
            }
        }
        if lo < t_min - 1e-12 {
            speed.fail(t_min - lo, || format!("probe {probe}: travel time {lo} below {t_min}"));
        }
        if hi > t_max + 1e-9 {
            finite.fail(hi - t_max, || format!("probe {probe}: travel time {hi} above {t_max}"));
        }

        for (i, &h1) in ts.iter().enumerate() {
            for &h2 in &ts[i + 1..] {
                if inflow.measure_of(h1, h2) > 1e-12 {
                    let (e1, e2) = (curve.eval(h1), curve.eval(h2));
                    if e2 <= e1 {
                        fifo.fail(e1 - e2, || format!("probe {probe}: H({h2}) = {e2} <= H({h1}) = {e1}"));
                    }
                }
            }
        }

        let cut = rng.gen_range(0.0..horizon);
        match model.exit_curve(&inflow.restrict(cut)) {
            Ok(rc) => {
                for &t in ts.iter().filter(|&&t| t <= cut) {
                    let d = (rc.eval(t) - curve.eval(t)).abs();
                    if d > 1e-9 {
                        causal.fail(d, || format!("probe {probe}: restricting at {cut} changed H({t}) by {d:e}"));
                    }
                }
            }
            Err(e) => causal.fail(f64::INFINITY, || format!("probe {probe}: {e}")),
        }
    }

    ConformanceReport {
        probes,
        checks: [continuity, speed, finite, fifo, causal].into_iter().map(Tally::finish).collect(),
    }
}
