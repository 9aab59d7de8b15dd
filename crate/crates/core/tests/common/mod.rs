#![allow(dead_code)]

use dynwardrop::arc::{ArcModel, DelayFunction};
use dynwardrop::measure::CumulativeFlow;
use dynwardrop::network::{Arc, Network, RouteFlowPattern};

pub struct Fixture {
    pub name: &'static str,
    pub network: Network,
    pub flows: RouteFlowPattern,
}

pub fn arc(id: &str, tail: &str, head: &str, model: ArcModel) -> Arc {
    Arc { id: id.into(), tail: tail.into(), head: head.into(), model }
}

pub fn constant(t: f64) -> ArcModel {
    ArcModel::constant(t).unwrap()
}

pub fn bottleneck(c: f64, k: f64) -> ArcModel {
    ArcModel::bottleneck(c, k).unwrap()
}

pub fn affine(free: f64, slope: f64) -> ArcModel {
    ArcModel::arc_performance(DelayFunction::affine(free, slope).unwrap())
}

pub fn network(nodes: &[&str], arcs: Vec<Arc>, routes: &[(&str, &[&str])]) -> Network {
    Network::new(
        nodes.iter().map(|n| n.to_string()).collect(),
        arcs,
        routes.iter().map(|(id, arcs)| (id.to_string(), arcs.iter().map(|a| a.to_string()).collect())).collect(),
    )
    .unwrap()
}

pub fn rates(segments: &[(f64, f64, f64)]) -> CumulativeFlow {
    CumulativeFlow::from_rates(segments).unwrap()
}

pub fn plus(a: CumulativeFlow, b: CumulativeFlow) -> CumulativeFlow {
    CumulativeFlow::sum([a, b].iter())
}

pub fn pattern(flows: Vec<CumulativeFlow>) -> RouteFlowPattern {
    RouteFlowPattern::new(flows)
}

/// Ten small networks (at most 6 arcs and 4 routes) with route inflows, covering every arc
/// model, atoms, shared arcs, a cycle and a multi-route grid.
pub fn fixtures() -> Vec<Fixture> {
    vec![
        Fixture {
            name: "constant_atom",
            network: network(&["o", "d"], vec![arc("a", "o", "d", constant(1.0))], &[("r", &["a"])]),
            flows: pattern(vec![CumulativeFlow::atom(0.0, 1.0)]),
        },
        Fixture {
            name: "constant_chain",
            network: network(
                &["o", "m", "d"],
                vec![arc("a", "o", "m", constant(1.0)), arc("b", "m", "d", constant(0.5))],
                &[("r", &["a", "b"])],
            ),
            flows: pattern(vec![rates(&[(0.0, 1.0, 1.0)])]),
        },
        Fixture {
            name: "bottleneck_rate_two",
            network: network(&["o", "d"], vec![arc("q", "o", "d", bottleneck(1.0, 1.0))], &[("r", &["q"])]),
            flows: pattern(vec![rates(&[(0.0, 1.0, 2.0)])]),
        },
        Fixture {
            name: "merge_at_bottleneck",
            network: network(
                &["o1", "o2", "m", "d"],
                vec![
                    arc("a", "o1", "m", constant(0.5)),
                    arc("b", "o2", "m", constant(0.75)),
                    arc("q", "m", "d", bottleneck(1.0, 1.0)),
                ],
                &[("r1", &["a", "q"]), ("r2", &["b", "q"])],
            ),
            flows: pattern(vec![rates(&[(0.0, 1.0, 1.0)]), rates(&[(0.25, 1.25, 1.0)])]),
        },
        Fixture {
            name: "constant_versus_bottleneck",
            network: network(
                &["o", "d"],
                vec![arc("c", "o", "d", constant(1.0)), arc("q", "o", "d", bottleneck(0.5, 1.0))],
                &[("r1", &["c"]), ("r2", &["q"])],
            ),
            flows: pattern(vec![rates(&[(0.0, 1.0, 1.0)]), rates(&[(0.0, 0.5, 1.5), (0.5, 1.0, 0.5)])]),
        },
        Fixture {
            name: "arc_performance_with_atom",
            network: network(&["o", "d"], vec![arc("p", "o", "d", affine(1.0, 1.0))], &[("r", &["p"])]),
            flows: pattern(vec![plus(rates(&[(0.0, 1.0, 1.0)]), CumulativeFlow::atom(0.25, 0.5))]),
        },
        Fixture {
            name: "arc_performance_shared",
            network: network(
                &["o1", "o2", "m", "d"],
                vec![
                    arc("a", "o1", "m", affine(0.5, 0.5)),
                    arc("b", "o2", "m", constant(0.5)),
                    arc("p", "m", "d", affine(1.0, 1.0)),
                ],
                &[("r1", &["a", "p"]), ("r2", &["b", "p"])],
            ),
            flows: pattern(vec![rates(&[(0.0, 1.0, 1.5)]), rates(&[(0.5, 1.5, 1.0)])]),
        },
        Fixture {
            name: "mixed_chain",
            network: network(
                &["o", "m1", "m2", "d"],
                vec![
                    arc("c", "o", "m1", constant(0.5)),
                    arc("q", "m1", "m2", bottleneck(0.5, 1.5)),
                    arc("p", "m2", "d", affine(0.75, 0.5)),
                ],
                &[("r", &["c", "q", "p"])],
            ),
            flows: pattern(vec![plus(rates(&[(0.0, 0.5, 3.0), (0.5, 1.0, 1.0)]), CumulativeFlow::atom(0.75, 0.5))]),
        },
        Fixture {
            name: "cycle",
            network: network(
                &["x", "y"],
                vec![arc("xy", "x", "y", bottleneck(0.5, 1.0)), arc("yx", "y", "x", affine(0.5, 0.5))],
                &[("r1", &["xy", "yx"]), ("r2", &["yx", "xy"])],
            ),
            flows: pattern(vec![rates(&[(0.0, 1.0, 1.5)]), rates(&[(0.0, 1.0, 1.0)])]),
        },
        Fixture {
            name: "four_route_grid",
            network: network(
                &["o", "p", "q", "d"],
                vec![
                    arc("op", "o", "p", constant(0.5)),
                    arc("oq", "o", "q", bottleneck(0.5, 1.0)),
                    arc("pd", "p", "d", affine(0.5, 1.0)),
                    arc("qd", "q", "d", constant(0.75)),
                    arc("pq", "p", "q", bottleneck(0.25, 2.0)),
                    arc("od", "o", "d", affine(1.5, 0.25)),
                ],
                &[
                    ("north", &["op", "pd"]),
                    ("south", &["oq", "qd"]),
                    ("zigzag", &["op", "pq", "qd"]),
                    ("direct", &["od"]),
                ],
            ),
            flows: pattern(vec![
                rates(&[(0.0, 1.0, 1.0)]),
                rates(&[(0.0, 1.0, 1.0)]),
                plus(rates(&[(0.25, 0.75, 1.0)]), CumulativeFlow::atom(0.5, 0.25)),
                rates(&[(0.0, 1.0, 0.5)]),
            ]),
        },
    ]
}
