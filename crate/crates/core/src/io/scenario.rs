use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arc::{ArcModel, DelayFunction, DEFAULT_SUBSTEPS};
use crate::equilibrium::{ChoiceMode, DemandTable, UserClass};
use crate::error::{Error, Result};
use crate::measure::{CumulativeFlow, Horizon};
use crate::network::{Arc, Network};

/// Format tag every scenario file must carry.
pub const SCENARIO_FORMAT: &str = "dynwardrop-scenario/1";

/// A validated scenario: network, fixed-departure demand and optional choosing classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub network: Network,
    pub demand: DemandTable,
    pub classes: Vec<UserClass>,
    pub horizon: Horizon,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    format: String,
    horizon: f64,
    nodes: Vec<String>,
    #[serde(default)]
    arcs: Vec<ArcEntry>,
    #[serde(default)]
    routes: Vec<RouteEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    demand: Vec<DemandEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    classes: Vec<ClassEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArcEntry {
    id: String,
    tail: String,
    head: String,
    /// `constant`, `arc_performance` or `bottleneck`.
    model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    free_flow_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    capacity: Option<f64>,
    /// `[volume, travel time]` breakpoints of the delay function.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delay: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    substeps: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RouteEntry {
    id: String,
    arcs: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemandEntry {
    origin: String,
    destination: String,
    /// `[start, end, rate]` segments.
    segments: Vec<[f64; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassEntry {
    origin: String,
    destination: String,
    /// `departure_choice` or `fixed`.
    choice: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    preferred_arrival: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segments: Option<Vec<[f64; 3]>>,
}

fn field<T>(value: Option<T>, owner: &str, name: &str) -> Result<T> {
    value.ok_or_else(|| Error::Validation(format!("{owner}: missing field `{name}`")))
}

fn reject<T>(value: &Option<T>, owner: &str, name: &str) -> Result<()> {
    match value {
        Some(_) => Err(Error::Validation(format!("{owner}: field `{name}` does not apply"))),
        None => Ok(()),
    }
}

fn segments_flow(owner: &str, segments: &[[f64; 3]]) -> Result<CumulativeFlow> {
    if let Some(s) = segments.iter().find(|s| s[2] < 0.0) {
        return Err(Error::Validation(format!("{owner}: negative rate {}", s[2])));
    }
    let segs: Vec<(f64, f64, f64)> = segments.iter().map(|s| (s[0], s[1], s[2])).collect();
    CumulativeFlow::from_rates(&segs).map_err(|e| Error::Validation(format!("{owner}: {e}")))
}

fn flow_segments(flow: &CumulativeFlow) -> Vec<[f64; 3]> {
    flow.knots().windows(2).filter(|w| w[0].slope > 0.0).map(|w| [w[0].time, w[1].time, w[0].slope]).collect()
}

fn arc_model(e: &ArcEntry) -> Result<ArcModel> {
    let owner = format!("arc \"{}\"", e.id);
    let model = match e.model.as_str() {
        "constant" => {
            reject(&e.capacity, &owner, "capacity")?;
            reject(&e.delay, &owner, "delay")?;
            reject(&e.substeps, &owner, "substeps")?;
            ArcModel::constant(field(e.free_flow_time, &owner, "free_flow_time")?)
        }
        "bottleneck" => {
            reject(&e.delay, &owner, "delay")?;
            reject(&e.substeps, &owner, "substeps")?;
            ArcModel::bottleneck(
                field(e.free_flow_time, &owner, "free_flow_time")?,
                field(e.capacity, &owner, "capacity")?,
            )
        }
        "arc_performance" => {
            reject(&e.free_flow_time, &owner, "free_flow_time")?;
            reject(&e.capacity, &owner, "capacity")?;
            let points = field(e.delay.clone(), &owner, "delay")?.iter().map(|p| (p[0], p[1])).collect();
            let delay = DelayFunction::new(points)?;
            Ok(ArcModel::ArcPerformance { delay, substeps: e.substeps.unwrap_or(DEFAULT_SUBSTEPS) })
        }
        other => {
            return Err(Error::Validation(format!(
                "{owner}: unknown model \"{other}\" (expected constant, arc_performance or bottleneck)"
            )))
        }
    };
    let model = model.map_err(|e| Error::Validation(format!("{owner}: {e}")))?;
    model.validate().map_err(|e| Error::Validation(format!("{owner}: {e}")))?;
    Ok(model)
}

fn class(e: &ClassEntry, horizon: Horizon) -> Result<UserClass> {
    let owner = format!("class {} -> {}", e.origin, e.destination);
    let class = match e.choice.as_str() {
        "departure_choice" => {
            reject(&e.segments, &owner, "segments")?;
            UserClass::departure_choice(
                &e.origin,
                &e.destination,
                field(e.mass, &owner, "mass")?,
                field(e.preferred_arrival, &owner, "preferred_arrival")?,
                field(e.alpha, &owner, "alpha")?,
                field(e.beta, &owner, "beta")?,
                field(e.gamma, &owner, "gamma")?,
            )
        }
        "fixed" => {
            for (v, name) in
                [(e.preferred_arrival, "preferred_arrival"), (e.alpha, "alpha"), (e.beta, "beta"), (e.gamma, "gamma")]
            {
                reject(&v, &owner, name)?;
            }
            let flow = segments_flow(&owner, &field(e.segments.clone(), &owner, "segments")?)?;
            let mut c = UserClass::fixed(&e.origin, &e.destination, flow);
            if let Some(m) = e.mass {
                c.mass = m;
            }
            c
        }
        other => {
            return Err(Error::Validation(format!(
                "{owner}: unknown choice \"{other}\" (expected departure_choice or fixed)"
            )))
        }
    };
    class.validate(horizon)?;
    Ok(class)
}

/// Parses and validates scenario text. `origin` labels error messages.
pub fn parse_scenario_str(text: &str, origin: &str) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(text)
        .map_err(|e| Error::Parse { path: origin.to_string(), message: e.to_string().trim_end().to_string() })?;
    if file.format != SCENARIO_FORMAT {
        return Err(Error::Parse {
            path: origin.to_string(),
            message: format!("unsupported format \"{}\" (expected \"{SCENARIO_FORMAT}\")", file.format),
        });
    }
    let horizon = Horizon::new(file.horizon)?;
    let arcs = file
        .arcs
        .iter()
        .map(|e| Ok(Arc { id: e.id.clone(), tail: e.tail.clone(), head: e.head.clone(), model: arc_model(e)? }))
        .collect::<Result<Vec<_>>>()?;
    let routes = file.routes.iter().map(|r| (r.id.clone(), r.arcs.clone())).collect();
    let network = Network::new(file.nodes, arcs, routes)?;
    let rows: Vec<(&str, &str, Vec<(f64, f64, f64)>)> = file
        .demand
        .iter()
        .map(|d| (d.origin.as_str(), d.destination.as_str(), d.segments.iter().map(|s| (s[0], s[1], s[2])).collect()))
        .collect();
    let demand = DemandTable::from_rates(horizon, &rows)?;
    demand.check_routes(&network).map_err(|e| Error::Validation(e.to_string()))?;
    let classes = file.classes.iter().map(|c| class(c, horizon)).collect::<Result<Vec<_>>>()?;
    for c in &classes {
        if network.routes_between(&c.origin, &c.destination).is_empty() {
            return Err(Error::Validation(format!("no route serves class {} -> {}", c.origin, c.destination)));
        }
    }
    Ok(Scenario { network, demand, classes, horizon })
}

/// Reads and validates a scenario file.
pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })?;
    parse_scenario_str(&text, &path.display().to_string())
}

/// Serialises a scenario so that [`parse_scenario_str`] rebuilds it exactly.
pub fn write_scenario(scenario: &Scenario) -> String {
    let arcs = scenario
        .network
        .arcs()
        .iter()
        .map(|a| {
            let mut e = ArcEntry {
                id: a.id.clone(),
                tail: a.tail.clone(),
                head: a.head.clone(),
                model: a.model.kind().to_string(),
                free_flow_time: None,
                capacity: None,
                delay: None,
                substeps: None,
            };
            match &a.model {
                ArcModel::Constant { free_flow_time } => e.free_flow_time = Some(*free_flow_time),
                ArcModel::Bottleneck { free_flow_time, capacity } => {
                    e.free_flow_time = Some(*free_flow_time);
                    e.capacity = Some(*capacity);
                }
                ArcModel::ArcPerformance { delay, substeps } => {
                    e.delay = Some(delay.points().iter().map(|&(v, t)| [v, t]).collect());
                    e.substeps = (*substeps != DEFAULT_SUBSTEPS).then_some(*substeps);
                }
            }
            e
        })
        .collect();
    let routes = scenario
        .network
        .routes()
        .iter()
        .map(|r| RouteEntry {
            id: r.id.clone(),
            arcs: r.arcs.iter().map(|&a| scenario.network.arcs()[a].id.clone()).collect(),
        })
        .collect();
    let demand = scenario
        .demand
        .entries()
        .iter()
        .map(|d| DemandEntry {
            origin: d.origin.clone(),
            destination: d.destination.clone(),
            segments: flow_segments(&d.flow),
        })
        .collect();
    let classes = scenario
        .classes
        .iter()
        .map(|c| {
            let mut e = ClassEntry {
                origin: c.origin.clone(),
                destination: c.destination.clone(),
                choice: String::new(),
                mass: Some(c.mass),
                preferred_arrival: None,
                alpha: None,
                beta: None,
                gamma: None,
                segments: None,
            };
            match &c.mode {
                ChoiceMode::DepartureChoice { preferred_arrival, alpha, beta, gamma } => {
                    e.choice = "departure_choice".into();
                    e.preferred_arrival = Some(*preferred_arrival);
                    e.alpha = Some(*alpha);
                    e.beta = Some(*beta);
                    e.gamma = Some(*gamma);
                }
                ChoiceMode::FixedDeparture { departures } => {
                    e.choice = "fixed".into();
                    e.segments = Some(flow_segments(departures));
                }
            }
            e
        })
        .collect();
    let file = ScenarioFile {
        format: SCENARIO_FORMAT.to_string(),
        horizon: scenario.horizon.end(),
        nodes: scenario.network.nodes().to_vec(),
        arcs,
        routes,
        demand,
        classes,
    };
    toml::to_string(&file).expect("scenario tables always serialise")
}
