use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arc::ConformanceReport;
use crate::error::{Error, Result};
use crate::loading::{ArcFlowBundle, TravelTimePattern};
use crate::measure::CumulativeFlow;
use crate::network::{Network, RouteFlowPattern};

/// Decimal rendering with 12 significant digits, shortest form.
pub fn format_number(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("scientific output parses");
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded}")
}

/// Indices of `ids` in ascending id order.
fn by_id<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<usize> {
    let mut order: Vec<(usize, &str)> = ids.enumerate().collect();
    order.sort_by(|a, b| a.1.cmp(b.1));
    order.into_iter().map(|(i, _)| i).collect()
}

/// Polyline rows of a cumulative curve: one row per knot, two at a jump (left, then right).
fn curve_rows(flow: &CumulativeFlow) -> Vec<(f64, f64)> {
    let mut rows = Vec::new();
    for k in flow.knots() {
        let left = flow.left_limit(k.time);
        if flow.atom_at(k.time) > 0.0 {
            rows.push((k.time, left));
        }
        rows.push((k.time, k.value));
    }
    rows
}

/// `route,h,travel_time`, one row per sample, both one-sided values at a jump.
pub fn write_route_times(path: &Path, network: &Network, times: &TravelTimePattern) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["route", "h", "travel_time"])?;
    for r in by_id(network.routes().iter().map(|r| r.id.as_str())) {
        for &(h, t) in times.points(r) {
            w.write_record([network.routes()[r].id.as_str(), &format_number(h), &format_number(t)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `arc,h,cum_in,cum_out` at every breakpoint of either curve and at `0` and `horizon`.
pub fn write_arc_flows(path: &Path, network: &Network, bundle: &ArcFlowBundle, horizon: f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["arc", "h", "cum_in", "cum_out"])?;
    for a in by_id(network.arcs().iter().map(|a| a.id.as_str())) {
        let (cin, cout) = (bundle.total(a), bundle.outflow(a));
        let mut times: Vec<f64> = cin.knots().iter().chain(cout.knots()).map(|k| k.time).collect();
        times.extend([0.0, horizon]);
        times.sort_by(f64::total_cmp);
        times.dedup();
        let id = network.arcs()[a].id.as_str();
        for t in times {
            if cin.atom_at(t) > 0.0 || cout.atom_at(t) > 0.0 {
                let row = [format_number(cin.left_limit(t)), format_number(cout.left_limit(t))];
                w.write_record([id, &format_number(t), &row[0], &row[1]])?;
            }
            w.write_record([id, &format_number(t), &format_number(cin.value_at(t)), &format_number(cout.value_at(t))])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `route,h,cumulative` polylines of the route inflows; repeated `h` marks a jump.
pub fn write_route_flows(path: &Path, network: &Network, flows: &RouteFlowPattern) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["route", "h", "cumulative"])?;
    for r in by_id(network.routes().iter().map(|r| r.id.as_str())) {
        for (h, v) in curve_rows(flows.get(r)) {
            w.write_record([network.routes()[r].id.as_str(), &format_number(h), &format_number(v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct RouteFlowRow {
    route: String,
    h: f64,
    cumulative: f64,
}

/// Reads a file written by [`write_route_flows`]; routes without rows carry no flow.
pub fn read_route_flows(path: &Path, network: &Network) -> Result<RouteFlowPattern> {
    let mut points: Vec<Vec<(f64, f64)>> = vec![Vec::new(); network.routes().len()];
    let mut reader = csv::Reader::from_path(path)?;
    for row in reader.deserialize() {
        let row: RouteFlowRow =
            row.map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })?;
        let r = network
            .route_index(&row.route)
            .ok_or_else(|| Error::Validation(format!("{}: unknown route \"{}\"", path.display(), row.route)))?;
        points[r].push((row.h, row.cumulative));
    }
    let flows = points
        .iter()
        .map(|p| CumulativeFlow::from_points(p).map_err(|e| Error::Validation(format!("{}: {e}", path.display()))))
        .collect::<Result<Vec<_>>>()?;
    Ok(RouteFlowPattern::new(flows))
}

/// `iteration,gap`.
pub fn write_gap_trace(path: &Path, trace: &[(usize, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "gap"])?;
    for &(n, g) in trace {
        w.write_record([n.to_string(), format_number(g)])?;
    }
    w.flush()?;
    Ok(())
}

/// `arc,model,assumption,passed,failures,worst,detail`, one row per arc and assumption.
pub fn write_conformance(path: &Path, network: &Network, reports: &[ConformanceReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["arc", "model", "assumption", "passed", "failures", "worst", "detail"])?;
    for a in by_id(network.arcs().iter().map(|a| a.id.as_str())) {
        let arc = &network.arcs()[a];
        for c in &reports[a].checks {
            w.write_record([
                arc.id.as_str(),
                arc.model.kind(),
                c.assumption.name(),
                if c.passed { "true" } else { "false" },
                &c.failures.to_string(),
                &format_number(c.worst),
                &c.detail,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Run summary written as `summary.toml`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    pub scenario: String,
    /// `ok` or `not_converged`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    /// Relative Wardrop gap, or utility regret for departure-time choice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<f64>,
    pub runtime_seconds: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, f64>,
}

impl RunSummary {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Validation(format!("summary: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arc::ArcModel;
    use crate::network::tests::arc;

    #[test]
    fn numbers_keep_twelve_digits() {
        assert_eq!(format_number(0.5), "0.5");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(2.0 / 3.0 * 1e3), "666.666666667");
        assert_eq!(format_number(-0.0), "0");
    }

    #[test]
    fn route_flows_round_trip_with_jumps() {
        let net = Network::new(
            vec!["o".into(), "d".into()],
            vec![
                arc("a", "o", "d", ArcModel::constant(1.0).unwrap()),
                arc("b", "o", "d", ArcModel::constant(2.0).unwrap()),
            ],
            vec![("r1".into(), vec!["a".into()]), ("r2".into(), vec!["b".into()])],
        )
        .unwrap();
        let x = RouteFlowPattern::new(vec![
            CumulativeFlow::sum([CumulativeFlow::atom(0.25, 0.5), CumulativeFlow::uniform(0.0, 1.0, 0.75)].iter()),
            CumulativeFlow::zero(),
        ]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("route_flows.csv");
        write_route_flows(&path, &net, &x).unwrap();
        let back = read_route_flows(&path, &net).unwrap();
        assert!(back.get(0).linf_distance(x.get(0)) < 1e-12);
        assert_eq!(back.get(0).atom_at(0.25), 0.5);
        assert!(back.get(1).is_zero());
    }
}
