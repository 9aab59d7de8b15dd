//! Directed graph, arc models and the fixed route set.

use std::collections::{HashMap, HashSet};

use crate::arc::{ArcModel, TravelTimeModel};
use crate::error::{Error, Result};
use crate::measure::CumulativeFlow;

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub id: String,
    pub tail: String,
    pub head: String,
    pub model: ArcModel,
}

/// A simple directed path, stored as indices into the arc table.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub id: String,
    pub arcs: Vec<usize>,
    pub origin: String,
    pub destination: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    nodes: Vec<String>,
    arcs: Vec<Arc>,
    routes: Vec<Route>,
}

impl Network {
    /// Validates and builds a network. `routes` pairs a route id with its arc ids in order.
    pub fn new(nodes: Vec<String>, arcs: Vec<Arc>, routes: Vec<(String, Vec<String>)>) -> Result<Self> {
        let mut node_set = HashSet::new();
        for n in &nodes {
            if !node_set.insert(n.as_str()) {
                return Err(Error::Validation(format!("duplicate node \"{n}\"")));
            }
        }
        let mut arc_index = HashMap::new();
        for (i, a) in arcs.iter().enumerate() {
            if arc_index.insert(a.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate arc \"{}\"", a.id)));
            }
            for end in [&a.tail, &a.head] {
                if !node_set.contains(end.as_str()) {
                    return Err(Error::Validation(format!("arc \"{}\" references unknown node \"{end}\"", a.id)));
                }
            }
            a.model.validate().map_err(|e| Error::Validation(format!("arc \"{}\": {e}", a.id)))?;
        }
        let mut seen_routes = HashSet::new();
        let mut built = Vec::with_capacity(routes.len());
        for (id, arc_ids) in routes {
            if !seen_routes.insert(id.clone()) {
                return Err(Error::Validation(format!("duplicate route \"{id}\"")));
            }
            if arc_ids.is_empty() {
                return Err(Error::Validation(format!("route \"{id}\" has no arcs")));
            }
            let mut idx = Vec::with_capacity(arc_ids.len());
            for a in &arc_ids {
                let i = *arc_index
                    .get(a)
                    .ok_or_else(|| Error::Validation(format!("route \"{id}\" uses unknown arc \"{a}\"")))?;
                if idx.contains(&i) {
                    return Err(Error::Validation(format!(
                        "route \"{id}\" repeats arc \"{a}\"; routes must be simple paths"
                    )));
                }
                idx.push(i);
            }
            for w in idx.windows(2) {
                if arcs[w[0]].head != arcs[w[1]].tail {
                    return Err(Error::Validation(format!(
                        "route \"{id}\" is not connected between arcs \"{}\" and \"{}\"",
                        arcs[w[0]].id, arcs[w[1]].id
                    )));
                }
            }
            built.push(Route {
                origin: arcs[idx[0]].tail.clone(),
                destination: arcs[idx[idx.len() - 1]].head.clone(),
                id,
                arcs: idx,
            });
        }
        Ok(Self { nodes, arcs, routes: built })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn arc_index(&self, id: &str) -> Option<usize> {
        self.arcs.iter().position(|a| a.id == id)
    }

    pub fn route_index(&self, id: &str) -> Option<usize> {
        self.routes.iter().position(|r| r.id == id)
    }

    /// Route indices serving `origin -> destination`, in route order.
    pub fn routes_between(&self, origin: &str, destination: &str) -> Vec<usize> {
        (0..self.routes.len())
            .filter(|&r| self.routes[r].origin == origin && self.routes[r].destination == destination)
            .collect()
    }

    /// Origin-destination pairs served by at least one route, in order of first appearance.
    pub fn od_pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        for r in &self.routes {
            let od = (r.origin.clone(), r.destination.clone());
            if !out.contains(&od) {
                out.push(od);
            }
        }
        out
    }

    /// Smallest free-flow lower bound over all arcs.
    pub fn t_min_star(&self) -> f64 {
        self.arcs.iter().map(|a| a.model.t_min()).fold(f64::INFINITY, f64::min)
    }
}

/// One inflow measure per route, indexed like [`Network::routes`].
#[derive(Debug, Clone, PartialEq)]
pub struct RouteFlowPattern {
    flows: Vec<CumulativeFlow>,
}

impl RouteFlowPattern {
    pub fn new(flows: Vec<CumulativeFlow>) -> Self {
        Self { flows }
    }

    pub fn zero(routes: usize) -> Self {
        Self { flows: vec![CumulativeFlow::zero(); routes] }
    }

    pub fn flows(&self) -> &[CumulativeFlow] {
        &self.flows
    }

    pub fn get(&self, route: usize) -> &CumulativeFlow {
        &self.flows[route]
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.flows.iter().map(CumulativeFlow::total).sum()
    }

    /// Latest knot over all routes, or `None` for the zero pattern.
    pub fn last_time(&self) -> Option<f64> {
        self.flows.iter().filter_map(|f| f.support().map(|s| s.1)).reduce(f64::max)
    }

    /// Each route flow restricted to `]-inf, h]`.
    pub fn restrict(&self, h: f64) -> Self {
        Self { flows: self.flows.iter().map(|f| f.restrict(h)).collect() }
    }
}
