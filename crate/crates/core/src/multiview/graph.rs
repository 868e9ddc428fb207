use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{ViewError, Viewpoint};

/// Undirected, unweighted adjacency between viewpoints.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ViewGraph {
    adjacency: BTreeMap<u32, BTreeSet<u32>>,
}

impl ViewGraph {
    pub fn from_edges(nodes: impl IntoIterator<Item = u32>, edges: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut g = Self::default();
        for n in nodes {
            g.adjacency.entry(n).or_default();
        }
        for (a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    fn add_edge(&mut self, a: u32, b: u32) {
        if a == b {
            return;
        }
        self.adjacency.entry(a).or_default().insert(b);
        self.adjacency.entry(b).or_default().insert(a);
    }

    pub fn nodes(&self) -> impl Iterator<Item = u32> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Neighbors in ascending id order.
    pub fn neighbors(&self, id: u32) -> impl Iterator<Item = u32> + '_ {
        self.adjacency.get(&id).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.adjacency.get(&a).is_some_and(|s| s.contains(&b))
    }

    /// Each edge once, as `(low, high)`.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        self.adjacency.iter().flat_map(|(&a, s)| s.iter().filter(move |&&b| a < b).map(move |&b| (a, b))).collect()
    }

    pub fn is_connected(&self) -> bool {
        match self.nodes().next() {
            None => true,
            Some(first) => bfs(self, first).len() == self.len(),
        }
    }
}

fn bfs(graph: &ViewGraph, start: u32) -> Vec<u32> {
    let mut seen = BTreeSet::from([start]);
    let mut order = vec![start];
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for n in graph.neighbors(v) {
            if seen.insert(n) {
                order.push(n);
                queue.push_back(n);
            }
        }
    }
    order
}

fn azimuth_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Connects viewpoints by their arrangement on elevation rings.
///
/// Viewpoints sharing an elevation form a ring; consecutive members by
/// azimuth are joined (wrapping around). Every viewpoint is also joined to
/// the nearest-azimuth member(s) of each adjacent ring, with ties within
/// 1e-6 degrees all connected.
pub fn build_view_graph(viewpoints: &[Viewpoint]) -> ViewGraph {
    const EPS: f64 = 1e-6;
    let mut graph = ViewGraph::from_edges(viewpoints.iter().map(|v| v.id), []);

    let mut rings: Vec<Vec<&Viewpoint>> = Vec::new();
    let mut by_elevation: Vec<&Viewpoint> = viewpoints.iter().collect();
    by_elevation.sort_by(|a, b| b.elevation_deg.total_cmp(&a.elevation_deg).then(a.id.cmp(&b.id)));
    for v in by_elevation {
        match rings.last_mut() {
            Some(ring) if (ring[0].elevation_deg - v.elevation_deg).abs() < EPS => ring.push(v),
            _ => rings.push(vec![v]),
        }
    }

    for ring in &mut rings {
        ring.sort_by(|a, b| {
            a.azimuth_deg.rem_euclid(360.0).total_cmp(&b.azimuth_deg.rem_euclid(360.0)).then(a.id.cmp(&b.id))
        });
        match ring.len() {
            0 | 1 => {}
            2 => graph.add_edge(ring[0].id, ring[1].id),
            n => {
                for k in 0..n {
                    graph.add_edge(ring[k].id, ring[(k + 1) % n].id);
                }
            }
        }
    }

    for pair in rings.windows(2) {
        for (from, to) in [(&pair[0], &pair[1]), (&pair[1], &pair[0])] {
            for v in from.iter() {
                let best = to.iter().map(|u| azimuth_gap(v.azimuth_deg, u.azimuth_deg)).fold(f64::INFINITY, f64::min);
                for u in to.iter() {
                    if azimuth_gap(v.azimuth_deg, u.azimuth_deg) <= best + EPS {
                        graph.add_edge(v.id, u.id);
                    }
                }
            }
        }
    }
    graph
}

/// Breadth-first ordering of all viewpoints from a start viewpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtensionSequence(Vec<u32>);

impl ExtensionSequence {
    pub fn start(&self) -> u32 {
        self.0[0]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// BFS from `start`, expanding neighbors in ascending id order.
pub fn extension_sequence(graph: &ViewGraph, start: u32) -> Result<ExtensionSequence, ViewError> {
    if !graph.adjacency.contains_key(&start) {
        return Err(ViewError::UnknownViewpoint(start));
    }
    let order = bfs(graph, start);
    if order.len() != graph.len() {
        let reached: BTreeSet<u32> = order.into_iter().collect();
        let missing = graph.nodes().filter(|n| !reached.contains(n)).collect();
        return Err(ViewError::UnreachableViewpoints(missing));
    }
    Ok(ExtensionSequence(order))
}
