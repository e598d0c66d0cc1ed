//! Mapper graph construction: cover the filter range, cluster each pullback
//! cell, and connect clusters that share records.

pub mod cluster;
pub mod cover;
pub mod export;
mod graph;

use rayon::prelude::*;

pub use cluster::{cluster_points, ClusterSpec};
pub use cover::{build_cover, CellKey, CoverAssignment, CoverSpec, IntervalSpec};
pub use graph::{Edge, MapperGraph, Vertex};

use crate::error::Result;
use crate::lens::{compose_filters, CoordinateTable, FilterSpec};
use crate::records::{PredictionRecord, RecordSet};

/// Clusters one cell's members; returned clusters hold positions into `members`.
pub fn cluster_cell(members: &[&PredictionRecord], spec: &ClusterSpec) -> Vec<Vec<usize>> {
    let points: Vec<&[f64]> = members.iter().map(|r| r.embedding.as_slice()).collect();
    cluster_points(&points, spec)
}

/// Clusters every cell, in parallel across cells. Output clusters hold
/// record indices.
pub fn cluster_cells(records: &RecordSet, cover: &CoverAssignment, spec: &ClusterSpec) -> Vec<Vec<Vec<usize>>> {
    cover
        .cells
        .par_iter()
        .map(|cell| {
            let members: Vec<&PredictionRecord> = cell.members.iter().map(|&i| &records.records()[i]).collect();
            cluster_cell(&members, spec)
                .into_iter()
                .map(|c| c.into_iter().map(|k| cell.members[k]).collect())
                .collect()
        })
        .collect()
}

/// One vertex per (cell, cluster); an edge wherever two vertices share a record.
pub fn nerve(records: &RecordSet, cover: &CoverAssignment, clusters: &[Vec<Vec<usize>>]) -> MapperGraph {
    graph::nerve(records, cover, clusters)
}

/// End-to-end construction: lens, cover, per-cell clustering, nerve.
pub fn build_mapper(
    records: &RecordSet,
    filters: &FilterSpec,
    external: Option<&CoordinateTable>,
    cover_spec: &CoverSpec,
    cluster_spec: &ClusterSpec,
) -> Result<MapperGraph> {
    cluster_spec.validate()?;
    let matrix = compose_filters(records, filters, external)?;
    let cover = build_cover(&matrix, cover_spec)?;
    let clusters = cluster_cells(records, &cover, cluster_spec);
    Ok(nerve(records, &cover, &clusters))
}
