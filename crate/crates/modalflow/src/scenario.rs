//! Scenario model: the network plus cost/profit models, passenger classes,
//! incentive box, provider map and bargaining weights, with the JSON document
//! schema used by the CLI and generators.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assignment::{
    ClassIncidence, DemandCurve, LinkCostModel, LinkProfitModel, PassengerClass, SatisfactionMode,
};
use crate::bargaining::ProviderMap;
use crate::equilibrium::StepSchedule;
use crate::error::{Error, Result};
use crate::incentive::IncentiveBox;
use crate::network::{
    incidence_for_routes, validate_network, Hyperpath, IncidenceData, Link, LinkId, Mode, Network,
    Node, NodeId, RouteId,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub alpha: StepSchedule,
    pub beta: StepSchedule,
    pub eps_flow: f64,
    pub eps_incentive: f64,
    pub max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            alpha: StepSchedule { p: 10.0, q: 0.001, r: 0.8 },
            beta: StepSchedule { p: 10.0, q: 1.0, r: 0.9 },
            eps_flow: 1e-6,
            eps_incentive: 1e-4,
            max_iters: 200_000,
        }
    }
}

/// A fully validated and compiled scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub network: Network,
    pub routes: Vec<Hyperpath>,
    pub cost_model: LinkCostModel,
    pub profit_model: LinkProfitModel,
    pub classes: Vec<PassengerClass>,
    pub od_pairs: Vec<(NodeId, NodeId)>,
    pub incentive_box: IncentiveBox,
    pub providers: ProviderMap,
    pub theta: Vec<f64>,
    pub solver: SolverSettings,
    /// Incidence matrices over the full route list.
    pub incidence: IncidenceData,
}

impl Scenario {
    pub fn num_links(&self) -> usize {
        self.network.num_links()
    }

    pub fn from_json(text: &str) -> Result<Scenario> {
        let doc: ScenarioDoc = serde_json::from_str(text)
            .map_err(|e| Error::Schema(format!("scenario json: {e}")))?;
        doc.compile()
    }

    pub fn from_path(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = self.to_doc()?;
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        Ok(text)
    }

    fn to_doc(&self) -> Result<ScenarioDoc> {
        let links = self
            .network
            .links()
            .iter()
            .map(|l| {
                let i = l.id.index();
                LinkDoc {
                    id: l.id,
                    tail: l.tail,
                    head: l.head,
                    mode: l.mode,
                    provider: l.provider,
                    price: self.cost_model.price[i],
                    time: self.cost_model.time_const[i],
                    congestion_slope: self.cost_model.congestion_slope[i],
                    profit_slope: self.profit_model.q_diag[i],
                    profit_intercept: self.profit_model.intercept[i],
                }
            })
            .collect();
        let hyperpaths = self
            .routes
            .iter()
            .map(|hp| HyperpathDoc {
                od: [hp.od.0, hp.od.1],
                links: hp.links.iter().copied().collect(),
                diversion: hp
                    .diversion
                    .iter()
                    .map(|(&(node, link), &prob)| DiversionDoc { node, link, prob })
                    .collect(),
            })
            .collect();
        let classes = self
            .classes
            .iter()
            .map(|k| {
                let demand = match &k.demand_curve {
                    DemandCurve::Tanh { a, b } => DemandDoc::Tanh { a: *a, b: *b },
                    DemandCurve::Table(points) => DemandDoc::Table { table: points.clone() },
                };
                ClassDoc {
                    name: k.name.clone(),
                    v0: k.v0,
                    beta: k.beta,
                    sigma: k.sigma,
                    satisfaction_mode: k.satisfaction_mode,
                    demand,
                    route_ids: k.route_ids.clone(),
                    route_specific_cost: if k.route_specific_cost.iter().all(|&c| c == 0.0) {
                        None
                    } else {
                        Some(k.route_specific_cost.clone())
                    },
                }
            })
            .collect();
        Ok(ScenarioDoc {
            nodes: self.network.nodes().to_vec(),
            links,
            gamma: self.cost_model.gamma,
            hyperpaths,
            classes,
            od_pairs: self.od_pairs.iter().map(|&(o, d)| [o, d]).collect(),
            incentive_box: IncentiveBoxDoc {
                j_min: self.incentive_box.j_min.clone(),
                j_max: self.incentive_box.j_max.clone(),
            },
            providers: self.providers.names.clone(),
            theta: self.theta.clone(),
            solver: SolverDoc::from(&self.solver),
        })
    }
}

// ---------------------------------------------------------------------------
// Document schema

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub nodes: Vec<Node>,
    pub links: Vec<LinkDoc>,
    pub gamma: f64,
    pub hyperpaths: Vec<HyperpathDoc>,
    pub classes: Vec<ClassDoc>,
    pub od_pairs: Vec<[NodeId; 2]>,
    pub incentive_box: IncentiveBoxDoc,
    pub providers: Vec<String>,
    pub theta: Vec<f64>,
    #[serde(default)]
    pub solver: SolverDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDoc {
    pub id: LinkId,
    pub tail: NodeId,
    pub head: NodeId,
    pub mode: Mode,
    pub provider: usize,
    pub price: f64,
    pub time: f64,
    pub congestion_slope: f64,
    pub profit_slope: f64,
    pub profit_intercept: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperpathDoc {
    pub od: [NodeId; 2],
    pub links: Vec<LinkId>,
    /// Entries are required wherever a node has more than one outgoing link
    /// in the hyperpath; single-link nodes default to probability 1.
    #[serde(default)]
    pub diversion: Vec<DiversionDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiversionDoc {
    pub node: NodeId,
    pub link: LinkId,
    pub prob: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassDoc {
    pub name: String,
    pub v0: f64,
    pub beta: f64,
    pub sigma: f64,
    pub satisfaction_mode: SatisfactionMode,
    pub demand: DemandDoc,
    pub route_ids: Vec<RouteId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route_specific_cost: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DemandDoc {
    Tanh { a: f64, b: f64 },
    Table { table: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncentiveBoxDoc {
    pub j_min: Vec<f64>,
    pub j_max: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverDoc {
    pub alpha: ScheduleDoc,
    pub beta: ScheduleDoc,
    pub eps_flow: f64,
    pub eps_incentive: f64,
    pub max_iters: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleDoc {
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl Default for SolverDoc {
    fn default() -> Self {
        SolverDoc::from(&SolverSettings::default())
    }
}

impl From<&SolverSettings> for SolverDoc {
    fn from(s: &SolverSettings) -> Self {
        SolverDoc {
            alpha: ScheduleDoc { p: s.alpha.p, q: s.alpha.q, r: s.alpha.r },
            beta: ScheduleDoc { p: s.beta.p, q: s.beta.q, r: s.beta.r },
            eps_flow: s.eps_flow,
            eps_incentive: s.eps_incentive,
            max_iters: s.max_iters,
        }
    }
}

impl ScenarioDoc {
    pub fn compile(&self) -> Result<Scenario> {
        let num_links = self.links.len();
        let nodes = self.nodes.clone();
        let links: Vec<Link> = self
            .links
            .iter()
            .map(|l| Link {
                id: l.id,
                tail: l.tail,
                head: l.head,
                mode: l.mode,
                provider: l.provider,
            })
            .collect();
        let network = Network::new(nodes, links)?;

        for (i, l) in self.links.iter().enumerate() {
            if l.provider >= self.providers.len() {
                return Err(Error::Schema(format!(
                    "links[{i}].provider: index {} out of range ({} providers)",
                    l.provider,
                    self.providers.len()
                )));
            }
        }

        let od_set: BTreeSet<(NodeId, NodeId)> =
            self.od_pairs.iter().map(|&[o, d]| (o, d)).collect();
        for (i, &[o, d]) in self.od_pairs.iter().enumerate() {
            for (n, name) in [(o, "origin"), (d, "destination")] {
                if !network.has_node(n) {
                    return Err(Error::Schema(format!(
                        "od_pairs[{i}]: unknown {name} node {}",
                        n.0
                    )));
                }
            }
            if o == d {
                return Err(Error::Schema(format!("od_pairs[{i}]: origin equals destination")));
            }
        }

        let mut routes = Vec::with_capacity(self.hyperpaths.len());
        for (i, doc) in self.hyperpaths.iter().enumerate() {
            let hp = compile_hyperpath(&network, doc)
                .map_err(|e| Error::Schema(format!("hyperpaths[{i}]: {e}")))?;
            if !od_set.contains(&hp.od) {
                return Err(Error::Schema(format!(
                    "hyperpaths[{i}]: od ({}, {}) not listed in od_pairs",
                    hp.od.0 .0, hp.od.1 .0
                )));
            }
            routes.push(hp);
        }

        let diagnostics = validate_network(&network, &routes);
        if !diagnostics.is_empty() {
            return Err(Error::Schema(diagnostics.join("; ")));
        }

        let cost_model = LinkCostModel {
            price: self.links.iter().map(|l| l.price).collect(),
            time_const: self.links.iter().map(|l| l.time).collect(),
            congestion_slope: self.links.iter().map(|l| l.congestion_slope).collect(),
            gamma: self.gamma,
        };
        cost_model.validate()?;
        let profit_model = LinkProfitModel {
            q_diag: self.links.iter().map(|l| l.profit_slope).collect(),
            intercept: self.links.iter().map(|l| l.profit_intercept).collect(),
        };
        profit_model.validate()?;

        let incidence = incidence_for_routes(&network, &routes)?;

        let mut classes = Vec::with_capacity(self.classes.len());
        for (i, doc) in self.classes.iter().enumerate() {
            let class = compile_class(doc, &routes, &incidence, num_links)
                .map_err(|e| Error::Schema(format!("classes[{i}]: {e}")))?;
            classes.push(class);
        }
        if classes.is_empty() {
            return Err(Error::Schema("classes: at least one class is required".into()));
        }

        if self.incentive_box.j_min.len() != num_links
            || self.incentive_box.j_max.len() != num_links
        {
            return Err(Error::Schema(format!(
                "incentive_box: j_min/j_max must have length {num_links}"
            )));
        }
        let incentive_box = IncentiveBox {
            j_min: self.incentive_box.j_min.clone(),
            j_max: self.incentive_box.j_max.clone(),
        };
        incentive_box.validate()?;

        if self.theta.len() != self.providers.len() {
            return Err(Error::Schema(format!(
                "theta: expected {} weights for {} providers, got {}",
                self.providers.len(),
                self.providers.len(),
                self.theta.len()
            )));
        }
        if let Some(bad) = self.theta.iter().find(|&&t| t <= 0.0) {
            return Err(Error::Schema(format!("theta: weights must be > 0, got {bad}")));
        }

        let providers = ProviderMap {
            names: self.providers.clone(),
            link_provider: self.links.iter().map(|l| l.provider).collect(),
        };

        let solver = SolverSettings {
            alpha: StepSchedule {
                p: self.solver.alpha.p,
                q: self.solver.alpha.q,
                r: self.solver.alpha.r,
            },
            beta: StepSchedule {
                p: self.solver.beta.p,
                q: self.solver.beta.q,
                r: self.solver.beta.r,
            },
            eps_flow: self.solver.eps_flow,
            eps_incentive: self.solver.eps_incentive,
            max_iters: self.solver.max_iters,
        };
        solver.alpha.validate("solver.alpha")?;
        solver.beta.validate("solver.beta")?;
        if solver.eps_flow <= 0.0 || solver.eps_incentive <= 0.0 {
            return Err(Error::Schema("solver: tolerances must be > 0".into()));
        }

        Ok(Scenario {
            network,
            routes,
            cost_model,
            profit_model,
            classes,
            od_pairs: self.od_pairs.iter().map(|&[o, d]| (o, d)).collect(),
            incentive_box,
            providers,
            theta: self.theta.clone(),
            solver,
            incidence,
        })
    }
}

fn compile_hyperpath(network: &Network, doc: &HyperpathDoc) -> Result<Hyperpath> {
    let links: BTreeSet<LinkId> = doc.links.iter().copied().collect();
    if links.len() != doc.links.len() {
        return Err(Error::Schema("duplicate link id".into()));
    }
    let mut diversion: BTreeMap<(NodeId, LinkId), f64> = BTreeMap::new();
    for entry in &doc.diversion {
        let link = network
            .link(entry.link)
            .ok_or_else(|| Error::Schema(format!("unknown link id {}", entry.link.0)))?;
        if !links.contains(&entry.link) {
            return Err(Error::Schema(format!(
                "diversion references link {} outside the hyperpath",
                entry.link.0
            )));
        }
        if link.tail != entry.node {
            return Err(Error::Schema(format!(
                "diversion entry for node {} does not match link {} tail {}",
                entry.node.0, entry.link.0, link.tail.0
            )));
        }
        if diversion.insert((entry.node, entry.link), entry.prob).is_some() {
            return Err(Error::Schema(format!(
                "duplicate diversion entry for node {} link {}",
                entry.node.0, entry.link.0
            )));
        }
    }
    // Nodes with exactly one outgoing hyperpath link take probability 1
    // implicitly.
    let mut out_count: BTreeMap<NodeId, Vec<LinkId>> = BTreeMap::new();
    for &id in &links {
        let link = network
            .link(id)
            .ok_or_else(|| Error::Schema(format!("unknown link id {}", id.0)))?;
        out_count.entry(link.tail).or_default().push(id);
    }
    for (node, out) in &out_count {
        if out.len() == 1 && !diversion.contains_key(&(*node, out[0])) {
            diversion.insert((*node, out[0]), 1.0);
        }
    }
    Ok(Hyperpath { od: (doc.od[0], doc.od[1]), links, diversion })
}

fn compile_class(
    doc: &ClassDoc,
    routes: &[Hyperpath],
    incidence: &IncidenceData,
    num_links: usize,
) -> Result<PassengerClass> {
    if doc.route_ids.is_empty() {
        return Err(Error::Schema("route_ids is empty".into()));
    }
    let mut od = None;
    let mut columns = Vec::with_capacity(doc.route_ids.len());
    for &rid in &doc.route_ids {
        let idx = rid.index();
        let route = routes
            .get(idx)
            .ok_or_else(|| Error::Schema(format!("unknown route id {}", rid.0)))?;
        match od {
            None => od = Some(route.od),
            Some(prev) if prev != route.od => {
                return Err(Error::Schema(format!(
                    "route {} has od ({}, {}) but the class started with ({}, {})",
                    rid.0, route.od.0 .0, route.od.1 .0, prev.0 .0, prev.1 .0
                )))
            }
            _ => {}
        }
        let col: Vec<(usize, f64)> = (0..num_links)
            .filter_map(|l| {
                let w = incidence.b[[l, idx]];
                (w != 0.0).then_some((l, w))
            })
            .collect();
        columns.push(col);
    }
    let route_specific_cost = doc
        .route_specific_cost
        .clone()
        .unwrap_or_else(|| vec![0.0; doc.route_ids.len()]);
    let demand_curve = match &doc.demand {
        DemandDoc::Tanh { a, b } => DemandCurve::Tanh { a: *a, b: *b },
        DemandDoc::Table { table } => DemandCurve::Table(table.clone()),
    };
    let class = PassengerClass {
        name: doc.name.clone(),
        v0: doc.v0,
        beta: doc.beta,
        sigma: doc.sigma,
        route_specific_cost,
        satisfaction_mode: doc.satisfaction_mode,
        demand_curve,
        route_ids: doc.route_ids.clone(),
        incidence: ClassIncidence { columns, num_links },
    };
    class.validate()?;
    Ok(class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{chengdu_fixture, CHENGDU_SCENARIO_JSON};

    #[test]
    fn fixture_round_trips_through_json() {
        let s = chengdu_fixture();
        let text = s.to_json().unwrap();
        let back = Scenario::from_json(&text).unwrap();
        assert_eq!(back, s);
        // Emission is idempotent on the text level too.
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn schema_errors_name_the_offending_path() {
        let mut doc: ScenarioDoc = serde_json::from_str(CHENGDU_SCENARIO_JSON).unwrap();
        doc.links[3].provider = 9;
        let err = doc.compile().unwrap_err();
        assert!(err.to_string().contains("links[3].provider"), "{err}");

        let mut doc: ScenarioDoc = serde_json::from_str(CHENGDU_SCENARIO_JSON).unwrap();
        doc.classes[0].route_ids.push(crate::network::RouteId(13));
        let err = doc.compile().unwrap_err();
        assert!(err.to_string().contains("classes[0]"), "{err}");

        let mut doc: ScenarioDoc = serde_json::from_str(CHENGDU_SCENARIO_JSON).unwrap();
        doc.theta.pop();
        let err = doc.compile().unwrap_err();
        assert!(err.to_string().contains("theta"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = CHENGDU_SCENARIO_JSON.replace("\"gamma\"", "\"036_gamma\"");
        let err = Scenario::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
    }

    #[test]
    fn malformed_json_is_a_schema_error() {
        let err = Scenario::from_json("{ nope").unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn multi_outgoing_node_requires_explicit_diversion() {
        let mut doc: ScenarioDoc = serde_json::from_str(CHENGDU_SCENARIO_JSON).unwrap();
        doc.hyperpaths[1].diversion.clear();
        let err = doc.compile().unwrap_err();
        assert!(err.to_string().contains("missing diversion"), "{err}");
    }

    #[test]
    fn single_outgoing_nodes_get_implicit_probability_one() {
        let doc: ScenarioDoc = serde_json::from_str(CHENGDU_SCENARIO_JSON).unwrap();
        let s = doc.compile().unwrap();
        // Route 1 is a single link without any diversion entries in the file.
        let hp = &s.routes[0];
        assert_eq!(hp.diversion.len(), 1);
        assert_eq!(hp.diversion.values().copied().collect::<Vec<_>>(), vec![1.0]);
    }

    #[test]
    fn table_demand_curves_survive_the_round_trip() {
        let mut s = chengdu_fixture();
        s.classes[0].demand_curve =
            crate::assignment::DemandCurve::Table(vec![(0.0, 0.0), (0.5, 20.0), (1.0, 30.0)]);
        let text = s.to_json().unwrap();
        let back = Scenario::from_json(&text).unwrap();
        assert_eq!(back.classes[0].demand_curve, s.classes[0].demand_curve);
    }
}
