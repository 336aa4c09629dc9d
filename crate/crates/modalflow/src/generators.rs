//! Experimental apparatus: scale-free network generation, k-shortest-path
//! hyperpath construction, random scenario sampling, and the bundled
//! Chengdu fixture.

use std::collections::BinaryHeap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::{ElementaryPath, Hyperpath, Link, LinkId, Mode, Network, Node, NodeId};
use crate::scenario::{
    ClassDoc, DemandDoc, DiversionDoc, HyperpathDoc, IncentiveBoxDoc, LinkDoc, Scenario,
    ScenarioDoc, ScheduleDoc, SolverDoc,
};

/// Sampling ranges and sizes for `random_scenario`. Defaults mirror the
/// large-network experiment: BA(500, 2), 100 OD pairs, 3 routes each.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n_nodes: usize,
    pub m_attach: usize,
    pub n_od_pairs: usize,
    pub k_routes: usize,
    pub seed: u64,
    /// Constant link cost c0 ~ U[lo, hi].
    pub cost_intercept_range: (f64, f64),
    /// Demand amplitude = demand_scale * U[lo, hi]; rate b ~ U[lo, hi].
    pub demand_scale: f64,
    pub demand_range: (f64, f64),
    /// Congestion slope buckets; the bucket also fixes mode and provider.
    pub congestion_slopes: Vec<f64>,
    pub profit_slope_range: (f64, f64),
    pub v0: f64,
    pub sigma: f64,
    /// Incentive box [-j_bound, j_bound] on every link.
    pub j_bound: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_nodes: 500,
            m_attach: 2,
            n_od_pairs: 100,
            k_routes: 3,
            seed: 0,
            cost_intercept_range: (10.0, 20.0),
            demand_scale: 10.0,
            demand_range: (0.9, 1.1),
            congestion_slopes: vec![0.005, 0.01, 0.015],
            profit_slope_range: (-0.1, 0.1),
            v0: 200.0,
            sigma: 200.0,
            j_bound: 3.0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_attach < 1 || self.n_nodes <= self.m_attach {
            return Err(Error::Domain(format!(
                "need n_nodes > m_attach >= 1, got n={} m={}",
                self.n_nodes, self.m_attach
            )));
        }
        if self.k_routes < 1 {
            return Err(Error::Domain("k_routes must be >= 1".into()));
        }
        if self.n_od_pairs < 1 {
            return Err(Error::Domain("n_od_pairs must be >= 1".into()));
        }
        if self.congestion_slopes.is_empty() {
            return Err(Error::Domain("need at least one congestion slope bucket".into()));
        }
        Ok(())
    }
}

/// Undirected preferential-attachment edges: a complete seed clique on the
/// first m nodes, then every new node attaches to m distinct existing nodes
/// with probability proportional to degree.
fn barabasi_albert_edges(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<(u32, u32)> {
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for u in 0..m {
        for v in (u + 1)..m {
            edges.push((u as u32, v as u32));
        }
    }
    // One entry per edge endpoint; sampling uniformly from this list is
    // sampling nodes proportionally to degree.
    let mut repeated: Vec<u32> = Vec::with_capacity(2 * m * n);
    for &(u, v) in &edges {
        repeated.push(u);
        repeated.push(v);
    }
    for new in m..n {
        let mut targets: Vec<u32> = Vec::with_capacity(m);
        if repeated.is_empty() {
            // m = 1 with a single isolated seed node.
            targets.push(0);
        } else {
            while targets.len() < m {
                let candidate = repeated[rng.gen_range(0..repeated.len())];
                if !targets.contains(&candidate) {
                    targets.push(candidate);
                }
            }
        }
        for &t in &targets {
            edges.push((new as u32, t));
            repeated.push(new as u32);
            repeated.push(t);
        }
    }
    edges
}

fn network_from_edges(n: usize, edges: &[(u32, u32)]) -> Result<Network> {
    let nodes = (0..n).map(|i| Node { id: NodeId(i as u32), label: None }).collect();
    let mut links = Vec::with_capacity(2 * edges.len());
    for &(u, v) in edges {
        for (tail, head) in [(u, v), (v, u)] {
            links.push(Link {
                id: LinkId(links.len() as u32 + 1),
                tail: NodeId(tail),
                head: NodeId(head),
                mode: Mode::Generic,
                provider: 0,
            });
        }
    }
    Network::new(nodes, links)
}

/// Scale-free directed network: Barabasi-Albert preferential attachment with
/// every undirected edge expanded into both directed links.
pub fn barabasi_albert(n: usize, m: usize, seed: u64) -> Result<Network> {
    if m < 1 || n <= m {
        return Err(Error::Domain(format!("need n > m >= 1, got n={n} m={m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = barabasi_albert_edges(n, m, &mut rng);
    network_from_edges(n, &edges)
}

// ---------------------------------------------------------------------------
// K shortest loopless paths (Yen)

#[derive(Debug, Clone, PartialEq)]
struct CostedPath {
    cost: f64,
    nodes: Vec<NodeId>,
    links: Vec<LinkId>,
}

/// Deterministic Dijkstra: the heap orders by (cost, node id) and relaxation
/// scans outgoing links in ascending id order, so equal-cost ties resolve
/// the same way on every run.
fn dijkstra(
    network: &Network,
    origin: NodeId,
    destination: NodeId,
    costs: &[f64],
    banned_links: &[bool],
    banned_nodes: &[bool],
) -> Option<CostedPath> {
    #[derive(PartialEq)]
    struct Entry(f64, u32);
    impl Eq for Entry {}
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            // Reversed: BinaryHeap is a max-heap and we want the cheapest.
            other
                .0
                .total_cmp(&self.0)
                .then_with(|| other.1.cmp(&self.1))
        }
    }

    let max_node = network.nodes().last().map(|n| n.id.0 as usize + 1).unwrap_or(0);
    let mut dist = vec![f64::INFINITY; max_node];
    let mut entering: Vec<Option<LinkId>> = vec![None; max_node];
    let mut settled = vec![false; max_node];
    if banned_nodes[origin.0 as usize] {
        return None;
    }
    dist[origin.0 as usize] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry(0.0, origin.0));
    while let Some(Entry(d, u)) = heap.pop() {
        if settled[u as usize] {
            continue;
        }
        settled[u as usize] = true;
        if u == destination.0 {
            break;
        }
        for &lid in network.outgoing(NodeId(u)) {
            if banned_links[lid.index()] {
                continue;
            }
            let link = network.link(lid).unwrap();
            let v = link.head.0 as usize;
            if banned_nodes[v] || settled[v] {
                continue;
            }
            let nd = d + costs[lid.index()];
            if nd < dist[v] {
                dist[v] = nd;
                entering[v] = Some(lid);
                heap.push(Entry(nd, v as u32));
            }
        }
    }
    if !settled[destination.0 as usize] {
        return None;
    }
    let mut links = Vec::new();
    let mut nodes = vec![destination];
    let mut cur = destination;
    while cur != origin {
        let lid = entering[cur.0 as usize].expect("settled node without entering link");
        links.push(lid);
        cur = network.link(lid).unwrap().tail;
        nodes.push(cur);
    }
    links.reverse();
    nodes.reverse();
    Some(CostedPath { cost: dist[destination.0 as usize], nodes, links })
}

/// Up to k loopless shortest paths as single-path hyperpaths.
#[derive(Debug, Clone)]
pub struct KShortest {
    pub routes: Vec<Hyperpath>,
    /// False when the graph admits fewer than the k requested paths.
    pub complete: bool,
}

/// Yen's algorithm on constant link costs; candidate ties break on
/// (cost, lexicographic node sequence).
pub fn k_shortest_hyperpaths(
    network: &Network,
    od: (NodeId, NodeId),
    k: usize,
    costs: &[f64],
) -> Result<KShortest> {
    if k < 1 {
        return Err(Error::Domain("k must be >= 1".into()));
    }
    if costs.len() != network.num_links() {
        return Err(Error::Domain("cost vector length mismatch".into()));
    }
    let (origin, destination) = od;
    let max_node = network.nodes().last().map(|n| n.id.0 as usize + 1).unwrap_or(0);
    let mut banned_links = vec![false; network.num_links()];
    let mut banned_nodes = vec![false; max_node];

    let first = dijkstra(network, origin, destination, costs, &banned_links, &banned_nodes)
        .ok_or(Error::Unreachable { origin, destination })?;
    let mut accepted: Vec<CostedPath> = vec![first];
    let mut candidates: Vec<CostedPath> = Vec::new();

    while accepted.len() < k {
        let prev = accepted.last().unwrap().clone();
        for spur_idx in 0..prev.links.len() {
            let spur_node = prev.nodes[spur_idx];
            let root_links = &prev.links[..spur_idx];
            let root_nodes = &prev.nodes[..spur_idx];
            let root_cost: f64 = root_links.iter().map(|l| costs[l.index()]).sum();

            banned_links.iter_mut().for_each(|b| *b = false);
            banned_nodes.iter_mut().for_each(|b| *b = false);
            for path in &accepted {
                if path.links.len() > spur_idx && path.links[..spur_idx] == *root_links {
                    banned_links[path.links[spur_idx].index()] = true;
                }
            }
            for node in root_nodes {
                banned_nodes[node.0 as usize] = true;
            }

            if let Some(spur) =
                dijkstra(network, spur_node, destination, costs, &banned_links, &banned_nodes)
            {
                let mut nodes = root_nodes.to_vec();
                nodes.extend_from_slice(&spur.nodes);
                let mut links = root_links.to_vec();
                links.extend_from_slice(&spur.links);
                let candidate = CostedPath { cost: root_cost + spur.cost, nodes, links };
                if !candidates.iter().any(|c| c.links == candidate.links)
                    && !accepted.iter().any(|c| c.links == candidate.links)
                {
                    candidates.push(candidate);
                }
            }
        }
        if candidates.is_empty() {
            break;
        }
        let best = candidates
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.cost.total_cmp(&b.cost).then_with(|| a.nodes.cmp(&b.nodes)))
            .map(|(i, _)| i)
            .unwrap();
        accepted.push(candidates.swap_remove(best));
    }

    let complete = accepted.len() == k;
    let routes = accepted
        .into_iter()
        .map(|p| {
            let path = ElementaryPath { od, links: p.links };
            Hyperpath::from_path(network, &path)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KShortest { routes, complete })
}

// ---------------------------------------------------------------------------
// Random scenario sampling

fn mode_for_bucket(bucket: usize) -> (Mode, &'static str) {
    match bucket {
        0 => (Mode::Subway, "subway"),
        1 => (Mode::Bus, "bus"),
        2 => (Mode::Taxi, "taxi"),
        _ => (Mode::Generic, "generic"),
    }
}

/// Sample a complete scenario. All randomness flows through one seeded
/// generator, in a fixed draw order (graph, cost intercepts, slope buckets,
/// profit slopes, OD pairs, demand parameters), so equal seeds give
/// bitwise-identical scenarios.
pub fn random_scenario(config: &GeneratorConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let edges = barabasi_albert_edges(config.n_nodes, config.m_attach, &mut rng);
    let network = network_from_edges(config.n_nodes, &edges)?;
    let num_links = network.num_links();

    let (c_lo, c_hi) = config.cost_intercept_range;
    let intercepts: Vec<f64> = (0..num_links).map(|_| rng.gen_range(c_lo..c_hi)).collect();
    let buckets: Vec<usize> =
        (0..num_links).map(|_| rng.gen_range(0..config.congestion_slopes.len())).collect();
    let (q_lo, q_hi) = config.profit_slope_range;
    let profit_slopes: Vec<f64> = (0..num_links).map(|_| rng.gen_range(q_lo..q_hi)).collect();

    let od_node_span = config.n_nodes.min(100) as u32;
    let mut od_pairs: Vec<(NodeId, NodeId)> = Vec::with_capacity(config.n_od_pairs);
    for _ in 0..config.n_od_pairs {
        let origin = rng.gen_range(0..od_node_span);
        let mut destination = rng.gen_range(0..od_node_span);
        while destination == origin {
            destination = rng.gen_range(0..od_node_span);
        }
        od_pairs.push((NodeId(origin), NodeId(destination)));
    }

    let (d_lo, d_hi) = config.demand_range;
    let demand_params: Vec<(f64, f64)> = (0..config.n_od_pairs)
        .map(|_| (config.demand_scale * rng.gen_range(d_lo..d_hi), rng.gen_range(d_lo..d_hi)))
        .collect();

    let links: Vec<LinkDoc> = network
        .links()
        .iter()
        .map(|l| {
            let i = l.id.index();
            let (mode, _) = mode_for_bucket(buckets[i]);
            LinkDoc {
                id: l.id,
                tail: l.tail,
                head: l.head,
                mode,
                provider: buckets[i],
                price: intercepts[i],
                time: 0.0,
                congestion_slope: config.congestion_slopes[buckets[i]],
                profit_slope: profit_slopes[i],
                profit_intercept: intercepts[i] / 2.0,
            }
        })
        .collect();

    let mut hyperpaths = Vec::new();
    let mut classes = Vec::new();
    let mut seen_od: Vec<[NodeId; 2]> = Vec::new();
    for (i, &(origin, destination)) in od_pairs.iter().enumerate() {
        let ks = k_shortest_hyperpaths(&network, (origin, destination), config.k_routes, &intercepts)?;
        let first_route = hyperpaths.len() as u32 + 1;
        for hp in &ks.routes {
            hyperpaths.push(HyperpathDoc {
                od: [origin, destination],
                links: hp.links.iter().copied().collect(),
                diversion: Vec::new(),
            });
        }
        let route_ids =
            (first_route..first_route + ks.routes.len() as u32).map(crate::network::RouteId).collect();
        let (a, b) = demand_params[i];
        classes.push(ClassDoc {
            name: format!("od_{}", i + 1),
            v0: config.v0,
            beta: 1.0,
            sigma: config.sigma,
            satisfaction_mode: crate::assignment::SatisfactionMode::ScaledMax,
            demand: DemandDoc::Tanh { a, b },
            route_ids,
            route_specific_cost: None,
        });
        if !seen_od.contains(&[origin, destination]) {
            seen_od.push([origin, destination]);
        }
    }

    let provider_names: Vec<String> = (0..config.congestion_slopes.len())
        .map(|b| mode_for_bucket(b).1.to_string())
        .collect();
    let doc = ScenarioDoc {
        nodes: network.nodes().to_vec(),
        links,
        gamma: 1.0,
        hyperpaths,
        classes,
        od_pairs: seen_od,
        incentive_box: IncentiveBoxDoc {
            j_min: vec![-config.j_bound; num_links],
            j_max: vec![config.j_bound; num_links],
        },
        providers: provider_names.clone(),
        theta: vec![1.0; provider_names.len()],
        solver: SolverDoc {
            alpha: ScheduleDoc { p: 10.0, q: 0.001, r: 0.8 },
            beta: ScheduleDoc { p: 100.0, q: 0.8, r: 0.9 },
            eps_flow: 1e-6,
            eps_incentive: 1e-4,
            max_iters: 200_000,
        },
    };
    doc.compile()
}

// ---------------------------------------------------------------------------
// Chengdu fixture

/// The bundled Chengdu scenario as JSON, identical to `chengdu_fixture()`.
pub const CHENGDU_SCENARIO_JSON: &str = include_str!("../data/chengdu.json");

/// The six-node Chengdu network: 12 links across taxi, bus, subway and
/// scooter, nine routes, two passenger groups, and the incentive box and
/// bargaining weights used throughout the examples.
pub fn chengdu_fixture() -> Scenario {
    let n = |i: u32| NodeId(i);
    // Nodes: 0 = o (railway station), 1..4 = transfer hubs, 5 = d (airport).
    let nodes = vec![
        Node { id: n(0), label: Some("o".into()) },
        Node { id: n(1), label: Some("1".into()) },
        Node { id: n(2), label: Some("2".into()) },
        Node { id: n(3), label: Some("3".into()) },
        Node { id: n(4), label: Some("4".into()) },
        Node { id: n(5), label: Some("d".into()) },
    ];
    // (tail, head, mode, provider, price, time, profit_slope, profit_intercept)
    let specs: [(u32, u32, Mode, usize, f64, f64, f64, f64); 12] = [
        (0, 5, Mode::Taxi, 0, 50.0, 44.0, -0.2, 10.0),
        (0, 1, Mode::Taxi, 0, 20.0, 14.0, -0.2, 4.0),
        (1, 2, Mode::Bus, 1, 3.0, 42.0, 0.05, 0.5),
        (2, 5, Mode::Bus, 1, 3.0, 38.0, 0.05, 0.5),
        (2, 5, Mode::Bus, 1, 4.0, 36.0, 0.05, 0.75),
        (1, 3, Mode::Scooter, 2, 1.0, 6.0, -0.03, 0.7),
        (3, 1, Mode::Scooter, 2, 1.0, 6.0, -0.03, 0.7),
        (2, 4, Mode::Scooter, 2, 1.0, 6.0, -0.03, 0.7),
        (4, 2, Mode::Scooter, 2, 1.0, 6.0, -0.03, 0.7),
        (0, 3, Mode::Bus, 1, 3.0, 48.0, 0.05, 0.5),
        (3, 4, Mode::Subway, 3, 5.0, 34.0, 0.05, 2.0),
        (4, 5, Mode::Subway, 3, 4.0, 40.0, 0.05, 1.6),
    ];
    let links: Vec<LinkDoc> = specs
        .iter()
        .enumerate()
        .map(|(i, &(tail, head, mode, provider, price, time, q, p0))| LinkDoc {
            id: LinkId(i as u32 + 1),
            tail: n(tail),
            head: n(head),
            mode,
            provider,
            price,
            time,
            congestion_slope: 0.02,
            profit_slope: q,
            profit_intercept: p0,
        })
        .collect();

    // Routes by link ids; routes through the 2 -> d segment split 0.4 / 0.6
    // over the two bus links 4 and 5.
    let route_links: [&[u32]; 9] = [
        &[1],
        &[2, 3, 4, 5],
        &[2, 6, 11, 12],
        &[2, 6, 11, 9, 4, 5],
        &[2, 3, 8, 12],
        &[10, 7, 3, 4, 5],
        &[10, 7, 3, 8, 12],
        &[10, 11, 9, 4, 5],
        &[10, 11, 12],
    ];
    let hyperpaths: Vec<HyperpathDoc> = route_links
        .iter()
        .map(|ids| {
            let diversion = if ids.contains(&4) && ids.contains(&5) {
                vec![
                    DiversionDoc { node: n(2), link: LinkId(4), prob: 0.4 },
                    DiversionDoc { node: n(2), link: LinkId(5), prob: 0.6 },
                ]
            } else {
                Vec::new()
            };
            HyperpathDoc {
                od: [n(0), n(5)],
                links: ids.iter().map(|&i| LinkId(i)).collect(),
                diversion,
            }
        })
        .collect();

    let route_ids = |ids: &[u32]| ids.iter().map(|&i| crate::network::RouteId(i)).collect();
    let classes = vec![
        ClassDoc {
            name: "group_a".into(),
            v0: 200.0,
            beta: 1.0,
            sigma: 200.0,
            satisfaction_mode: crate::assignment::SatisfactionMode::ScaledMax,
            demand: DemandDoc::Tanh { a: 60.0, b: 1.0 },
            route_ids: route_ids(&[1, 2, 9]),
            route_specific_cost: None,
        },
        ClassDoc {
            name: "group_b".into(),
            v0: 200.0,
            beta: 1.0,
            sigma: 200.0,
            satisfaction_mode: crate::assignment::SatisfactionMode::ScaledMax,
            demand: DemandDoc::Tanh { a: 40.0, b: 1.0 },
            route_ids: route_ids(&[1, 2, 3, 4, 5, 6, 7, 8, 9]),
            route_specific_cost: None,
        },
    ];

    let doc = ScenarioDoc {
        nodes,
        links,
        gamma: 0.5,
        hyperpaths,
        classes,
        od_pairs: vec![[n(0), n(5)]],
        incentive_box: IncentiveBoxDoc { j_min: vec![-3.0; 12], j_max: vec![3.0; 12] },
        providers: vec!["taxi".into(), "bus".into(), "scooter".into(), "subway".into()],
        theta: vec![70.0, 60.0, 1.0, 200.0],
        solver: SolverDoc {
            alpha: ScheduleDoc { p: 10.0, q: 0.001, r: 0.8 },
            beta: ScheduleDoc { p: 10.0, q: 1.0, r: 0.9 },
            eps_flow: 1e-6,
            eps_incentive: 1e-4,
            max_iters: 200_000,
        },
    };
    doc.compile().expect("the bundled fixture is valid")
}
