use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::cover::{CellKey, CoverAssignment};
use crate::records::RecordSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: usize,
    pub cell: CellKey,
    pub cluster: usize,
    /// Record ids, in record-set order.
    pub members: Vec<String>,
    pub size: usize,
    /// Most frequent ground-truth label; ties go to the smaller label.
    pub dominant_label: usize,
    pub purity: f64,
    pub mean_truth_conf: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub shared: usize,
}

/// 1-skeleton of the nerve of the pullback cover. Vertices are ordered by
/// (cell, cluster); edges by (source, target) with `source < target`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MapperGraph {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
}

pub(super) fn nerve(records: &RecordSet, cover: &CoverAssignment, clusters: &[Vec<Vec<usize>>]) -> MapperGraph {
    let mut vertices = Vec::new();
    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); records.len()];
    for (cell, cell_clusters) in cover.cells.iter().zip(clusters) {
        for (k, members) in cell_clusters.iter().enumerate() {
            let id = vertices.len();
            let mut sorted = members.clone();
            sorted.sort_unstable();
            for &i in &sorted {
                owners[i].push(id);
            }
            vertices.push(vertex_stats(records, id, cell.key.clone(), k, &sorted));
        }
    }

    let mut shared: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for vs in &owners {
        for (a, &u) in vs.iter().enumerate() {
            for &v in &vs[a + 1..] {
                let key = if u < v { (u, v) } else { (v, u) };
                *shared.entry(key).or_insert(0) += 1;
            }
        }
    }
    let edges = shared
        .into_iter()
        .map(|((source, target), shared)| Edge { source, target, shared })
        .collect();
    MapperGraph { vertices, edges }
}

fn vertex_stats(records: &RecordSet, id: usize, cell: CellKey, cluster: usize, members: &[usize]) -> Vertex {
    let mut label_counts = vec![0usize; records.class_count()];
    let mut conf = 0.0;
    for &i in members {
        let r = &records.records()[i];
        label_counts[r.label] += 1;
        conf += r.mean_truth_conf;
    }
    let (dominant_label, top) = label_counts
        .iter()
        .enumerate()
        .fold((0, 0), |best, (l, &c)| if c > best.1 { (l, c) } else { best });
    let size = members.len();
    Vertex {
        id,
        cell,
        cluster,
        members: members.iter().map(|&i| records.records()[i].id.clone()).collect(),
        size,
        dominant_label,
        purity: top as f64 / size as f64,
        mean_truth_conf: conf / size as f64,
    }
}

impl MapperGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.vertices.len()];
        for e in &self.edges {
            deg[e.source] += 1;
            deg[e.target] += 1;
        }
        deg
    }

    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for e in &self.edges {
            adj[e.source].push(e.target);
            adj[e.target].push(e.source);
        }
        adj
    }

    /// Connected components as sorted vertex id lists, ordered by smallest id.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.neighbours();
        let mut seen = vec![false; adj.len()];
        let mut out = Vec::new();
        for s in 0..adj.len() {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut stack = vec![s];
            let mut comp = Vec::new();
            while let Some(v) = stack.pop() {
                comp.push(v);
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// True when the vertex set in `component` forms one simple cycle.
    pub fn is_cycle(&self, component: &[usize]) -> bool {
        let set: BTreeSet<usize> = component.iter().copied().collect();
        let deg = self.degrees();
        let edges = self
            .edges
            .iter()
            .filter(|e| set.contains(&e.source) && set.contains(&e.target))
            .count();
        component.len() >= 3 && edges == component.len() && component.iter().all(|&v| deg[v] == 2)
    }

    /// Number of connected components per dominant label, counting only
    /// vertices of that label.
    pub fn label_component_counts(&self) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        let labels: BTreeSet<usize> = self.vertices.iter().map(|v| v.dominant_label).collect();
        for l in labels {
            let keep: Vec<bool> = self.vertices.iter().map(|v| v.dominant_label == l).collect();
            let sub = MapperGraph {
                vertices: self.vertices.clone(),
                edges: self
                    .edges
                    .iter()
                    .filter(|e| keep[e.source] && keep[e.target])
                    .cloned()
                    .collect(),
            };
            let n = sub.components().iter().filter(|c| keep[c[0]]).count();
            out.insert(l, n);
        }
        out
    }

    /// Edges whose endpoints carry different dominant labels.
    pub fn cross_label_edges(&self) -> Vec<&Edge> {
        self.edges
            .iter()
            .filter(|e| self.vertices[e.source].dominant_label != self.vertices[e.target].dominant_label)
            .collect()
    }

    /// Record ids covered by at least one vertex, sorted.
    pub fn covered_ids(&self) -> BTreeSet<&str> {
        self.vertices
            .iter()
            .flat_map(|v| v.members.iter().map(String::as_str))
            .collect()
    }
}
