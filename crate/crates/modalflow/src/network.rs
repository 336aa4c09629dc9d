//! Multi-modal network graph: nodes, mode-tagged links, elementary paths,
//! hyperpaths with diversion probabilities, and the link/path/route incidence
//! matrices A, E and B = AE.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DIVERSION_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

/// 1-based link index; link ids in a network are exactly 1..=L.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u32);

impl LinkId {
    /// 0-based position in vectors and matrix rows.
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }
}

/// 1-based route (hyperpath) index within a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RouteId(pub u32);

impl RouteId {
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Taxi,
    Bus,
    Subway,
    Bike,
    Scooter,
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub tail: NodeId,
    pub head: NodeId,
    pub mode: Mode,
    /// Index into the scenario's provider table.
    pub provider: usize,
}

/// Directed multigraph; parallel links between the same node pair are allowed
/// and links are identified by id, never by endpoint pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    nodes: Vec<Node>,
    links: Vec<Link>,
    outgoing: HashMap<NodeId, Vec<LinkId>>,
}

impl Network {
    /// Builds a network, sorting nodes and links into canonical id order.
    /// Structural problems are reported by `validate`, not here; only
    /// conditions that make the object unusable are rejected.
    pub fn new(mut nodes: Vec<Node>, mut links: Vec<Link>) -> Result<Self> {
        nodes.sort_by_key(|n| n.id);
        links.sort_by_key(|l| l.id);
        for (i, link) in links.iter().enumerate() {
            if link.id.0 as usize != i + 1 {
                return Err(Error::Schema(format!(
                    "link ids must be exactly 1..={}, found id {} at position {}",
                    links.len(),
                    link.id.0,
                    i
                )));
            }
        }
        let mut outgoing: HashMap<NodeId, Vec<LinkId>> = HashMap::new();
        for link in &links {
            outgoing.entry(link.tail).or_default().push(link.id);
        }
        for ids in outgoing.values_mut() {
            ids.sort();
        }
        Ok(Network { nodes, links, outgoing })
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> Option<&Link> {
        self.links.get(id.index())
    }

    pub fn has_node(&self, id: NodeId) -> bool {
        self.nodes.binary_search_by_key(&id, |n| n.id).is_ok()
    }

    /// Outgoing link ids of `node`, ascending.
    pub fn outgoing(&self, node: NodeId) -> &[LinkId] {
        self.outgoing.get(&node).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Node- and link-level diagnostics; empty iff the network invariants hold.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for node in &self.nodes {
            if !seen.insert(node.id) {
                out.push(format!("duplicate node id {}", node.id.0));
            }
        }
        for link in &self.links {
            if link.tail == link.head {
                out.push(format!("link {} is a self-loop at node {}", link.id.0, link.tail.0));
            }
            for (end, name) in [(link.tail, "tail"), (link.head, "head")] {
                if !self.has_node(end) {
                    out.push(format!("link {} {} references unknown node {}", link.id.0, name, end.0));
                }
            }
        }
        out
    }
}

/// Acyclic origin-to-destination link sequence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ElementaryPath {
    pub od: (NodeId, NodeId),
    pub links: Vec<LinkId>,
}

/// A bundle of elementary paths over a link set, with diversion probabilities
/// at branch nodes. The link set must form a DAG so that traversal
/// probabilities are well defined.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperpath {
    pub od: (NodeId, NodeId),
    pub links: BTreeSet<LinkId>,
    /// (node, outgoing link) -> probability. Complete over every outgoing
    /// link of every non-destination node of the hyperpath.
    pub diversion: BTreeMap<(NodeId, LinkId), f64>,
}

impl Hyperpath {
    /// Single elementary path wrapped as a hyperpath (all diversions 1).
    pub fn from_path(network: &Network, path: &ElementaryPath) -> Result<Self> {
        let mut links = BTreeSet::new();
        let mut diversion = BTreeMap::new();
        for &id in &path.links {
            let link = network
                .link(id)
                .ok_or_else(|| Error::Schema(format!("unknown link id {}", id.0)))?;
            links.insert(id);
            diversion.insert((link.tail, id), 1.0);
        }
        Ok(Hyperpath { od: path.od, links, diversion })
    }
}

/// Nodes of the hyperpath's sub-DAG and the outgoing hyperpath links per node.
struct HyperpathView<'a> {
    origin: NodeId,
    destination: NodeId,
    out_links: BTreeMap<NodeId, Vec<&'a Link>>,
}

fn hyperpath_view<'a>(network: &'a Network, hp: &Hyperpath) -> Result<HyperpathView<'a>> {
    if hp.links.is_empty() {
        return Err(Error::InvalidHyperpath("empty link set".into()));
    }
    let mut out_links: BTreeMap<NodeId, Vec<&Link>> = BTreeMap::new();
    for &id in &hp.links {
        let link = network
            .link(id)
            .ok_or_else(|| Error::Schema(format!("unknown link id {}", id.0)))?;
        out_links.entry(link.tail).or_default().push(link);
        out_links.entry(link.head).or_default();
    }
    Ok(HyperpathView { origin: hp.od.0, destination: hp.od.1, out_links })
}

/// Diagnostics for one hyperpath against the network; `tag` names it in messages.
pub fn validate_hyperpath(network: &Network, hp: &Hyperpath, tag: &str) -> Vec<String> {
    let mut out = Vec::new();
    let view = match hyperpath_view(network, hp) {
        Ok(v) => v,
        Err(e) => return vec![format!("{tag}: {e}")],
    };
    let (origin, destination) = (view.origin, view.destination);
    if !view.out_links.contains_key(&origin) || view.out_links[&origin].is_empty() {
        out.push(format!("{tag}: origin {} has no outgoing link", origin.0));
    }
    for (&node, links) in &view.out_links {
        if node == destination {
            if !links.is_empty() {
                out.push(format!("{tag}: destination {} has outgoing links", destination.0));
            }
            continue;
        }
        if links.is_empty() {
            out.push(format!("{tag}: node {} dead-ends before the destination", node.0));
            continue;
        }
        let mut sum = 0.0;
        for link in links {
            match hp.diversion.get(&(node, link.id)) {
                Some(&p) if p >= 0.0 => sum += p,
                Some(&p) => out.push(format!(
                    "{tag}: negative diversion probability {p} at node {} link {}",
                    node.0, link.id.0
                )),
                None => out.push(format!(
                    "{tag}: missing diversion probability at node {} link {}",
                    node.0, link.id.0
                )),
            }
        }
        if (sum - 1.0).abs() > DIVERSION_SUM_TOL {
            out.push(format!(
                "{tag}: diversion probabilities at node {} sum to {sum}, expected 1",
                node.0
            ));
        }
    }
    // Kahn's algorithm over the sub-DAG.
    let mut indegree: BTreeMap<NodeId, usize> = view.out_links.keys().map(|&n| (n, 0)).collect();
    for links in view.out_links.values() {
        for link in links {
            *indegree.get_mut(&link.head).unwrap() += 1;
        }
    }
    let mut queue: Vec<NodeId> =
        indegree.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
    let mut visited = 0usize;
    while let Some(node) = queue.pop() {
        visited += 1;
        for link in &view.out_links[&node] {
            let d = indegree.get_mut(&link.head).unwrap();
            *d -= 1;
            if *d == 0 {
                queue.push(link.head);
            }
        }
    }
    if visited != view.out_links.len() {
        out.push(format!("{tag}: link set contains a cycle"));
    } else {
        // Reachability only makes sense on a DAG.
        let mut reach = BTreeSet::new();
        let mut stack = vec![origin];
        while let Some(node) = stack.pop() {
            if !reach.insert(node) {
                continue;
            }
            if let Some(links) = view.out_links.get(&node) {
                stack.extend(links.iter().map(|l| l.head));
            }
        }
        for &node in view.out_links.keys() {
            if !reach.contains(&node) {
                out.push(format!("{tag}: node {} unreachable from origin {}", node.0, origin.0));
            }
        }
    }
    out
}

/// Full network diagnostics: node/link invariants plus every hyperpath.
/// Returns an empty list iff everything holds.
pub fn validate_network(network: &Network, hyperpaths: &[Hyperpath]) -> Vec<String> {
    let mut out = network.validate();
    for (i, hp) in hyperpaths.iter().enumerate() {
        out.extend(validate_hyperpath(network, hp, &format!("hyperpath {}", i + 1)));
    }
    out
}

/// Every elementary path contained in the hyperpath, with its en-route
/// probability (the product of diversion probabilities along it).
/// Probabilities sum to 1 for a valid hyperpath.
pub fn enumerate_paths(network: &Network, hp: &Hyperpath) -> Result<Vec<(ElementaryPath, f64)>> {
    let diags = validate_hyperpath(network, hp, "hyperpath");
    if !diags.is_empty() {
        return Err(Error::InvalidHyperpath(diags.join("; ")));
    }
    let view = hyperpath_view(network, hp)?;
    let mut out = Vec::new();
    // Depth-first walk in ascending link-id order; the DAG check above
    // bounds the recursion.
    let mut stack: Vec<(NodeId, usize)> = vec![(view.origin, 0)];
    let mut trail: Vec<&Link> = Vec::new();
    while let Some((node, next)) = stack.pop() {
        if node == view.destination {
            let prob = trail
                .iter()
                .map(|l| hp.diversion[&(l.tail, l.id)])
                .product();
            out.push((
                ElementaryPath { od: hp.od, links: trail.iter().map(|l| l.id).collect() },
                prob,
            ));
            trail.pop();
            continue;
        }
        let links = &view.out_links[&node];
        if next < links.len() {
            let link = links[next];
            stack.push((node, next + 1));
            trail.push(link);
            stack.push((link.head, 0));
        } else {
            trail.pop();
        }
    }
    Ok(out)
}

/// Link-path (A), path-route (E) and link-route (B = AE) incidence matrices
/// over a canonical ordering: links by id, paths sorted by od then link
/// sequence, routes in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceData {
    /// L x N, 0/1: a[l][n] = 1 iff link l belongs to path n.
    pub a: Array2<f64>,
    /// N x M: e[n][m] = en-route probability of path n within route m.
    pub e: Array2<f64>,
    /// L x M: b = a . e, traversal probabilities.
    pub b: Array2<f64>,
    /// Canonical path catalog matching the columns of A / rows of E.
    pub paths: Vec<ElementaryPath>,
}

impl IncidenceData {
    pub fn num_links(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_paths(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_routes(&self) -> usize {
        self.b.ncols()
    }

    /// Dense CSV of B (row = link id, column = route id) for debugging.
    pub fn write_b_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        write!(w, "link")?;
        for m in 0..self.num_routes() {
            write!(w, ",route_{}", m + 1)?;
        }
        writeln!(w)?;
        for l in 0..self.num_links() {
            write!(w, "{}", l + 1)?;
            for m in 0..self.num_routes() {
                write!(w, ",{}", self.b[[l, m]])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Assemble incidence matrices from a path catalog and the hyperpaths using
/// them. Paths are deduplicated and sorted canonically; every elementary
/// path of every hyperpath must appear in the catalog.
pub fn build_incidence(
    network: &Network,
    paths: &[ElementaryPath],
    hyperpaths: &[Hyperpath],
) -> Result<IncidenceData> {
    let num_links = network.num_links();
    let mut catalog: Vec<ElementaryPath> = paths.to_vec();
    catalog.sort();
    catalog.dedup();
    for path in &catalog {
        for &id in &path.links {
            if network.link(id).is_none() {
                return Err(Error::Schema(format!("unknown link id {}", id.0)));
            }
        }
    }
    let index: HashMap<&ElementaryPath, usize> =
        catalog.iter().enumerate().map(|(i, p)| (p, i)).collect();

    let num_paths = catalog.len();
    let num_routes = hyperpaths.len();
    let mut a = Array2::zeros((num_links, num_paths));
    for (n, path) in catalog.iter().enumerate() {
        for &id in &path.links {
            a[[id.index(), n]] = 1.0;
        }
    }
    let mut e = Array2::zeros((num_paths, num_routes));
    for (m, hp) in hyperpaths.iter().enumerate() {
        for (path, prob) in enumerate_paths(network, hp)? {
            let &n = index.get(&path).ok_or_else(|| {
                Error::Schema(format!(
                    "hyperpath {} contains a path missing from the catalog",
                    m + 1
                ))
            })?;
            e[[n, m]] += prob;
        }
    }
    let b = a.dot(&e);
    Ok(IncidenceData { a, e, b, paths: catalog })
}

/// Enumerate all paths of `hyperpaths` and build their incidence data.
pub fn incidence_for_routes(network: &Network, hyperpaths: &[Hyperpath]) -> Result<IncidenceData> {
    let mut paths = Vec::new();
    for hp in hyperpaths {
        for (path, _) in enumerate_paths(network, hp)? {
            paths.push(path);
        }
    }
    build_incidence(network, &paths, hyperpaths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::chengdu_fixture;

    fn two_node_net(links: Vec<(u32, u32)>) -> Network {
        let max = links.iter().flat_map(|&(a, b)| [a, b]).max().unwrap_or(0);
        let nodes = (0..=max).map(|i| Node { id: NodeId(i), label: None }).collect();
        let links = links
            .into_iter()
            .enumerate()
            .map(|(i, (t, h))| Link {
                id: LinkId(i as u32 + 1),
                tail: NodeId(t),
                head: NodeId(h),
                mode: Mode::Generic,
                provider: 0,
            })
            .collect();
        Network::new(nodes, links).unwrap()
    }

    #[test]
    fn chengdu_route2_enumerates_both_paths() {
        let s = chengdu_fixture();
        let paths = enumerate_paths(&s.network, &s.routes[1]).unwrap();
        assert_eq!(paths.len(), 2);
        let probs: Vec<f64> = paths.iter().map(|(_, p)| *p).collect();
        let via4 = paths.iter().position(|(p, _)| p.links.contains(&LinkId(4))).unwrap();
        assert!((probs[via4] - 0.4).abs() < 1e-15);
        assert!((probs[1 - via4] - 0.6).abs() < 1e-15);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_path_hyperpath_has_probability_one() {
        let s = chengdu_fixture();
        let paths = enumerate_paths(&s.network, &s.routes[8]).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].1, 1.0);
        assert_eq!(paths[0].0.links, vec![LinkId(10), LinkId(11), LinkId(12)]);
    }

    #[test]
    fn enumeration_sums_to_one_for_every_fixture_route() {
        let s = chengdu_fixture();
        for hp in &s.routes {
            let total: f64 = enumerate_paths(&s.network, hp).unwrap().iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-10);
        }
    }

    /// Random layered DAG hyperpaths checked against an independent
    /// recursive enumeration that multiplies diversion probabilities per
    /// complete path.
    #[test]
    fn random_dag_hyperpaths_match_brute_force() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;

        fn brute_force(
            net: &Network,
            hp: &Hyperpath,
            node: NodeId,
            acc: f64,
            trail: &mut Vec<LinkId>,
            out: &mut Vec<(Vec<LinkId>, f64)>,
        ) {
            if node == hp.od.1 {
                out.push((trail.clone(), acc));
                return;
            }
            for &lid in net.outgoing(node) {
                if hp.links.contains(&lid) {
                    let p = hp.diversion[&(node, lid)];
                    trail.push(lid);
                    brute_force(net, hp, net.link(lid).unwrap().head, acc * p, trail, out);
                    trail.pop();
                }
            }
        }

        for seed in 0..100u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // Layered DAG: origin 0, three middle layers of 2 nodes, sink 7.
            let layers: Vec<Vec<u32>> = vec![vec![0], vec![1, 2], vec![3, 4], vec![5, 6], vec![7]];
            let mut edges = Vec::new();
            for w in layers.windows(2) {
                for &a in &w[0] {
                    for &b in &w[1] {
                        if rng.gen_bool(0.8) {
                            edges.push((a, b));
                        }
                    }
                }
            }
            for w in layers.windows(2) {
                for &a in &w[0] {
                    if !edges.iter().any(|&(x, _)| x == a) {
                        edges.push((a, w[1][0]));
                    }
                }
                for &b in &w[1] {
                    if !edges.iter().any(|&(_, y)| y == b) {
                        edges.push((w[0][0], b));
                    }
                }
            }
            let net = two_node_net(edges);
            let mut links = BTreeSet::new();
            let mut diversion = BTreeMap::new();
            for node in net.nodes() {
                let out = net.outgoing(node.id);
                if out.is_empty() {
                    continue;
                }
                let mut weights: Vec<f64> = out.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
                let total: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|w| *w /= total);
                for (&lid, &w) in out.iter().zip(&weights) {
                    links.insert(lid);
                    diversion.insert((node.id, lid), w);
                }
            }
            let hp = Hyperpath { od: (NodeId(0), NodeId(7)), links, diversion };
            let enumerated = enumerate_paths(&net, &hp).unwrap();
            let mut expected = Vec::new();
            brute_force(&net, &hp, NodeId(0), 1.0, &mut Vec::new(), &mut expected);
            assert_eq!(enumerated.len(), expected.len(), "seed {seed}");
            let total: f64 = enumerated.iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-10, "seed {seed}: sum {total}");
            for (path, prob) in &enumerated {
                let hit = expected.iter().find(|(links, _)| *links == path.links).unwrap();
                assert!((prob - hit.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn incidence_matches_fixture_columns() {
        let s = chengdu_fixture();
        let inc = &s.incidence;
        assert_eq!(inc.num_routes(), 9);
        // Route 9 walks links 10, 11, 12 deterministically.
        for l in 0..12 {
            let expect = if l >= 9 { 1.0 } else { 0.0 };
            assert_eq!(inc.b[[l, 8]], expect);
        }
        // Route 2: links 2 and 3 surely, then the 0.4/0.6 bus split.
        let col: Vec<f64> = (0..12).map(|l| inc.b[[l, 1]]).collect();
        let mut expect = vec![0.0; 12];
        expect[1] = 1.0;
        expect[2] = 1.0;
        expect[3] = 0.4;
        expect[4] = 0.6;
        for (a, b) in col.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn incidence_b_equals_a_dot_e_and_brute_force() {
        let s = chengdu_fixture();
        let inc = &s.incidence;
        let product = inc.a.dot(&inc.e);
        for (x, y) in inc.b.iter().zip(product.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        // b_lm equals the sum of path probabilities over paths containing l.
        for (m, hp) in s.routes.iter().enumerate() {
            let paths = enumerate_paths(&s.network, hp).unwrap();
            for l in 0..inc.num_links() {
                let direct: f64 = paths
                    .iter()
                    .filter(|(p, _)| p.links.iter().any(|id| id.index() == l))
                    .map(|(_, e)| e)
                    .sum();
                assert!((inc.b[[l, m]] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_hyperpath_list_gives_zero_columns() {
        let s = chengdu_fixture();
        let inc = build_incidence(&s.network, &[], &[]).unwrap();
        assert_eq!(inc.num_routes(), 0);
        assert_eq!(inc.num_paths(), 0);
        assert_eq!(inc.b.nrows(), 12);
    }

    #[test]
    fn path_order_does_not_change_b() {
        let s = chengdu_fixture();
        let mut paths = Vec::new();
        for hp in &s.routes {
            for (p, _) in enumerate_paths(&s.network, hp).unwrap() {
                paths.push(p);
            }
        }
        let forward = build_incidence(&s.network, &paths, &s.routes).unwrap();
        paths.reverse();
        let reversed = build_incidence(&s.network, &paths, &s.routes).unwrap();
        assert_eq!(forward.b, reversed.b);
        assert_eq!(forward.a, reversed.a);
    }

    #[test]
    fn validate_reports_self_loop() {
        let nodes = vec![
            Node { id: NodeId(0), label: None },
            Node { id: NodeId(1), label: None },
        ];
        let links = vec![Link {
            id: LinkId(1),
            tail: NodeId(0),
            head: NodeId(0),
            mode: Mode::Generic,
            provider: 0,
        }];
        let net = Network::new(nodes, links).unwrap();
        let diags = net.validate();
        assert_eq!(diags.len(), 1);
        assert!(diags[0].contains("link 1"), "{diags:?}");
    }

    #[test]
    fn validate_reports_bad_diversion_row() {
        let s = chengdu_fixture();
        let mut hp = s.routes[1].clone();
        hp.diversion.insert((NodeId(2), LinkId(4)), 0.3); // 0.3 + 0.6 = 0.9
        let diags = validate_hyperpath(&s.network, &hp, "hyperpath 2");
        assert_eq!(diags.len(), 1);
        assert!(diags[0].contains("node 2") && diags[0].contains("expected 1"), "{diags:?}");
    }

    #[test]
    fn fixture_validates_clean() {
        let s = chengdu_fixture();
        assert!(validate_network(&s.network, &s.routes).is_empty());
    }

    #[test]
    fn cyclic_link_set_is_rejected() {
        let net = two_node_net(vec![(0, 1), (1, 2), (2, 1), (1, 3)]);
        let links: BTreeSet<LinkId> = [1, 2, 3, 4].into_iter().map(LinkId).collect();
        let diversion: BTreeMap<(NodeId, LinkId), f64> = [
            ((NodeId(0), LinkId(1)), 1.0),
            ((NodeId(1), LinkId(2)), 0.5),
            ((NodeId(1), LinkId(4)), 0.5),
            ((NodeId(2), LinkId(3)), 1.0),
        ]
        .into_iter()
        .collect();
        let hp = Hyperpath { od: (NodeId(0), NodeId(3)), links, diversion };
        let err = enumerate_paths(&net, &hp).unwrap_err();
        assert!(matches!(err, Error::InvalidHyperpath(_)), "{err}");
    }

    #[test]
    fn b_csv_export_is_dense_by_link() {
        let s = chengdu_fixture();
        let mut buf = Vec::new();
        s.incidence.write_b_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 13);
        assert!(lines[0].starts_with("link,route_1,"));
        assert!(lines[1].starts_with("1,1,"));
    }
}
