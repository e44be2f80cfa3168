use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::TopoError;
use crate::geometry::{Pose2, Vec2};
use crate::perception::STATIC_DIM;
use crate::semantic::SEM_DIM;
use crate::world::candidates::{Candidate, NUM_SECTORS};

pub const MERGE_RADIUS: f64 = 0.5;
pub const SUMMARY_DIM: usize = SEM_DIM;
pub const FUSED_DIM: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Current,
    Visited,
    Candidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoNode {
    pub id: usize,
    pub position: Vec2,
    pub kind: NodeKind,
    pub static_feature: Vec<f64>,
    pub human_summary: Vec<f64>,
    pub fused: Vec<f64>,
    pub last_updated: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TopoGraph {
    pub nodes: Vec<TopoNode>,
    /// Undirected edges keyed by `(min id, max id)`.
    pub edges: BTreeMap<(usize, usize), f64>,
    pub current: Option<usize>,
    /// Nodes resolved from the latest candidate set, in sector order.
    pub actions: Vec<usize>,
}

/// A tracked person ready for assignment: world position plus both
/// stream features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanFeature {
    pub id: usize,
    pub position: Vec2,
    pub geo: Vec<f64>,
    pub sem: Vec<f64>,
}

impl TopoGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&self, id: usize) -> &TopoNode {
        &self.nodes[id]
    }

    pub fn current_node(&self) -> Option<&TopoNode> {
        self.current.map(|c| &self.nodes[c])
    }

    pub fn edge(&self, a: usize, b: usize) -> Option<f64> {
        self.edges.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn neighbors(&self, id: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.edges.iter().filter_map(move |(&(a, b), &w)| {
            if a == id {
                Some((b, w))
            } else if b == id {
                Some((a, w))
            } else {
                None
            }
        })
    }

    fn add_edge(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let len = self.nodes[a].position.distance(self.nodes[b].position);
        if len > 0.0 {
            self.edges.insert((a.min(b), a.max(b)), len);
        }
    }

    fn nearest_within(&self, p: Vec2, radius: f64, skip: Option<usize>) -> Option<usize> {
        self.nodes
            .iter()
            .filter(|n| Some(n.id) != skip)
            .map(|n| (n.id, n.position.distance(p)))
            .filter(|&(_, d)| d < radius)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(id, _)| id)
    }

    fn push_node(&mut self, position: Vec2, kind: NodeKind, static_feature: Vec<f64>, step: u64) -> usize {
        let id = self.nodes.len();
        self.nodes.push(TopoNode {
            id,
            position,
            kind,
            static_feature,
            human_summary: vec![0.0; SUMMARY_DIM],
            fused: vec![0.0; FUSED_DIM],
            last_updated: step,
        });
        id
    }

    /// Geodesic distances over graph edges from `source` to every node.
    /// Unreachable nodes get `f64::INFINITY`.
    pub fn geodesic_from(&self, source: usize) -> Vec<f64> {
        let n = self.nodes.len();
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (&(a, b), &w) in &self.edges {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        dist[source] = 0.0;
        for _ in 0..n {
            let Some(u) =
                (0..n).filter(|&i| !done[i] && dist[i].is_finite()).min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
            else {
                break;
            };
            done[u] = true;
            for &(v, w) in &adj[u] {
                if dist[u] + w < dist[v] {
                    dist[v] = dist[u] + w;
                }
            }
        }
        dist
    }
}

/// Places the agent on the graph and merges the new candidates.
///
/// `sector_features` holds one static feature per panoramic sector; a
/// candidate takes its sector's feature and the current node the sector mean.
/// Re-observed nodes have their human summaries cleared.
pub fn update_graph(
    graph: &TopoGraph,
    pose: &Pose2,
    candidates: &[Candidate],
    sector_features: &[Vec<f64>],
    step: u64,
) -> Result<TopoGraph, TopoError> {
    if sector_features.len() != NUM_SECTORS {
        return Err(TopoError::DimensionMismatch { expected: NUM_SECTORS, got: sector_features.len() });
    }
    if let Some(f) = sector_features.iter().find(|f| f.len() != STATIC_DIM) {
        return Err(TopoError::DimensionMismatch { expected: STATIC_DIM, got: f.len() });
    }
    let mut g = graph.clone();
    let mean: Vec<f64> =
        (0..STATIC_DIM).map(|k| sector_features.iter().map(|f| f[k]).sum::<f64>() / NUM_SECTORS as f64).collect();
    let here = pose.position();
    let current = match g.nearest_within(here, MERGE_RADIUS, None) {
        Some(id) => id,
        None => g.push_node(here, NodeKind::Current, mean.clone(), step),
    };
    if let Some(prev) = g.current {
        if prev != current {
            g.nodes[prev].kind = NodeKind::Visited;
            g.add_edge(prev, current);
        }
    }
    g.current = Some(current);
    {
        let node = &mut g.nodes[current];
        node.kind = NodeKind::Current;
        node.static_feature = mean;
        node.human_summary = vec![0.0; SUMMARY_DIM];
        node.last_updated = step;
    }
    let mut actions = Vec::new();
    for c in candidates {
        let feature = sector_features[c.sector].clone();
        let id = match g.nearest_within(c.position, MERGE_RADIUS, Some(current)) {
            Some(id) => {
                let node = &mut g.nodes[id];
                node.static_feature = feature;
                node.human_summary = vec![0.0; SUMMARY_DIM];
                node.last_updated = step;
                id
            }
            None => g.push_node(c.position, NodeKind::Candidate, feature, step),
        };
        g.add_edge(current, id);
        if !actions.contains(&id) {
            actions.push(id);
        }
    }
    g.actions = actions;
    Ok(g)
}

/// Attaches each person to the nearest action or current node (ties to the
/// lower id) and recomputes the summaries of nodes that received anyone.
pub fn assign_humans(graph: &TopoGraph, humans: &[HumanFeature]) -> Result<TopoGraph, TopoError> {
    let mut g = graph.clone();
    if humans.is_empty() {
        return Ok(g);
    }
    for h in humans {
        if h.geo.len() != SUMMARY_DIM {
            return Err(TopoError::DimensionMismatch { expected: SUMMARY_DIM, got: h.geo.len() });
        }
        if h.sem.len() != SUMMARY_DIM {
            return Err(TopoError::DimensionMismatch { expected: SUMMARY_DIM, got: h.sem.len() });
        }
    }
    let mut targets: Vec<usize> = g.actions.clone();
    targets.extend(g.current);
    targets.sort_unstable();
    targets.dedup();
    if targets.is_empty() {
        return Ok(g);
    }
    let mut assigned: BTreeMap<usize, Vec<&HumanFeature>> = BTreeMap::new();
    for h in humans {
        let best = targets
            .iter()
            .map(|&id| (id, g.nodes[id].position.distance(h.position)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(id, _)| id)
            .expect("targets are non-empty");
        assigned.entry(best).or_default().push(h);
    }
    for (node, hs) in assigned {
        g.nodes[node].human_summary = human_summary(&hs);
    }
    Ok(g)
}

/// Mean of `geo + sem`, summed in ascending id order; zero for nobody.
pub fn human_summary(humans: &[&HumanFeature]) -> Vec<f64> {
    let mut sorted: Vec<&HumanFeature> = humans.to_vec();
    sorted.sort_by_key(|h| h.id);
    let mut sum = vec![0.0; SUMMARY_DIM];
    for h in &sorted {
        for k in 0..SUMMARY_DIM {
            sum[k] += h.geo[k] + h.sem[k];
        }
    }
    if !sorted.is_empty() {
        let n = sorted.len() as f64;
        sum.iter_mut().for_each(|x| *x /= n);
    }
    sum
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSnapshot {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub kind: NodeKind,
    pub static_norm: f64,
    pub human_norm: f64,
    pub fused_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub current: Option<usize>,
    pub nodes: Vec<NodeSnapshot>,
    pub edges: Vec<(usize, usize, f64)>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn snapshot(graph: &TopoGraph) -> GraphSnapshot {
    GraphSnapshot {
        current: graph.current,
        nodes: graph
            .nodes
            .iter()
            .map(|n| NodeSnapshot {
                id: n.id,
                x: n.position.x,
                y: n.position.y,
                kind: n.kind,
                static_norm: norm(&n.static_feature),
                human_norm: norm(&n.human_summary),
                fused_norm: norm(&n.fused),
            })
            .collect(),
        edges: graph.edges.iter().map(|(&(a, b), &w)| (a, b, w)).collect(),
    }
}
