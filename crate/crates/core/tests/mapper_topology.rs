use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use proptest::prelude::*;
use topoexplain::lens::{compose_filters, CoordinateTable, FilterComponent, FilterSpec};
use topoexplain::mapper::{build_cover, build_mapper, cluster_cells, nerve, ClusterSpec, CoverSpec, MapperGraph};
use topoexplain::records::{PredictionRecord, RecordSet};
use topoexplain::refmodel::{emit_records, generate_corpus, train_toy, CorpusSpec, TrainConfig};

fn ring(n: usize, radius: f64, offset: usize) -> Vec<PredictionRecord> {
    (0..n)
        .map(|i| {
            let t = TAU * i as f64 / n as f64;
            PredictionRecord {
                id: format!("p{:04}", offset + i),
                label: 0,
                mean_pred_conf: 1.0,
                mean_truth_conf: 1.0,
                tokens: vec![],
                embedding: vec![radius * t.cos(), radius * t.sin()],
            }
        })
        .collect()
}

fn height_lens(set: &RecordSet) -> CoordinateTable {
    let mut t = CoordinateTable::new(1);
    for r in set {
        t.insert(r.id.clone(), vec![r.embedding[1]]).unwrap();
    }
    t
}

fn height_mapper(set: &RecordSet, resolution: usize, gain: f64) -> MapperGraph {
    let spec = FilterSpec::new(vec![FilterComponent::ExternalCoord(0)]).unwrap();
    let cover = CoverSpec::uniform(1, resolution, gain).unwrap();
    build_mapper(set, &spec, Some(&height_lens(set)), &cover, &ClusterSpec::default()).unwrap()
}

/// Connected components by breadth-first search over the edge list.
fn components(g: &MapperGraph) -> Vec<BTreeSet<usize>> {
    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in &g.edges {
        adj.entry(e.source).or_default().push(e.target);
        adj.entry(e.target).or_default().push(e.source);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for v in 0..g.vertices.len() {
        if !seen.insert(v) {
            continue;
        }
        let mut comp = BTreeSet::from([v]);
        let mut queue = vec![v];
        while let Some(u) = queue.pop() {
            for &w in adj.get(&u).into_iter().flatten() {
                if seen.insert(w) {
                    comp.insert(w);
                    queue.push(w);
                }
            }
        }
        out.push(comp);
    }
    out
}

fn assert_cycle(g: &MapperGraph, comp: &BTreeSet<usize>) {
    let edges = g
        .edges
        .iter()
        .filter(|e| comp.contains(&e.source) && comp.contains(&e.target))
        .count();
    assert_eq!(edges, comp.len(), "V = E within the component");
    for &v in comp {
        let deg = g.edges.iter().filter(|e| e.source == v || e.target == v).count();
        assert_eq!(deg, 2, "vertex {v} has degree {deg}");
    }
}

#[test]
fn circle_is_a_single_cycle() {
    let set = RecordSet::new(ring(200, 1.0, 0), 1).unwrap();
    let g = height_mapper(&set, 8, 0.3);
    let comps = components(&g);
    assert_eq!(comps.len(), 1);
    assert_eq!(g.vertex_count(), g.edge_count());
    assert_cycle(&g, &comps[0]);
}

#[test]
fn pipeline_equals_entry_point() {
    let set = RecordSet::new(ring(200, 1.0, 0), 1).unwrap();
    let spec = FilterSpec::new(vec![FilterComponent::ExternalCoord(0)]).unwrap();
    let lens = height_lens(&set);
    let matrix = compose_filters(&set, &spec, Some(&lens)).unwrap();
    let cover = build_cover(&matrix, &CoverSpec::uniform(1, 8, 0.3).unwrap()).unwrap();
    let clusters = cluster_cells(&set, &cover, &ClusterSpec::default());
    assert_eq!(nerve(&set, &cover, &clusters), height_mapper(&set, 8, 0.3));
}

#[test]
fn concentric_circles_give_two_cycles() {
    let mut recs = ring(200, 1.0, 0);
    recs.extend(ring(400, 2.0, 200));
    let set = RecordSet::new(recs, 1).unwrap();
    // Six intervals over [-2, 2] put the inner circle's extremes (±1) at
    // interval midpoints, so its caps are not swallowed by a neighbour.
    let g = height_mapper(&set, 6, 0.3);
    let comps = components(&g);
    assert_eq!(comps.len(), 2);
    for c in &comps {
        assert_cycle(&g, c);
        let radii: BTreeSet<bool> = c
            .iter()
            .flat_map(|&v| &g.vertices[v].members)
            .map(|id| set.by_id(id).unwrap().embedding[0].hypot(set.by_id(id).unwrap().embedding[1]) > 1.5)
            .collect();
        assert_eq!(radii.len(), 1, "a component mixes the two circles");
    }
}

#[test]
fn zero_gain_has_no_edges() {
    let set = RecordSet::new(ring(200, 1.0, 0), 1).unwrap();
    assert!(height_mapper(&set, 8, 0.0).edges.is_empty());
}

#[test]
fn edges_are_exactly_nonempty_intersections() {
    let set = RecordSet::new(ring(120, 1.0, 0), 1).unwrap();
    let g = height_mapper(&set, 6, 0.45);
    let members: Vec<BTreeSet<&String>> = g.vertices.iter().map(|v| v.members.iter().collect()).collect();
    let mut expected = BTreeMap::new();
    for a in 0..members.len() {
        for b in a + 1..members.len() {
            let shared = members[a].intersection(&members[b]).count();
            if shared > 0 {
                expected.insert((a, b), shared);
            }
        }
    }
    let got: BTreeMap<(usize, usize), usize> = g.edges.iter().map(|e| ((e.source, e.target), e.shared)).collect();
    assert_eq!(got, expected);
}

fn synthetic_records() -> RecordSet {
    let spec = CorpusSpec {
        docs_per_class: 60,
        doc_length: 60,
        ..Default::default()
    };
    let corpus = generate_corpus(&spec).unwrap();
    let cfg = TrainConfig {
        epochs: 10,
        ..Default::default()
    };
    let model = train_toy(&corpus.documents, &corpus.embeddings, &cfg).unwrap();
    emit_records(&model, &corpus.documents, 20, 5).unwrap()
}

#[test]
fn ground_truth_lens_gives_pure_vertices() {
    let set = synthetic_records();
    let spec = FilterSpec::new(vec![
        FilterComponent::GroundTruthLabel,
        FilterComponent::MeanTruthConf,
        FilterComponent::LinearProjection { axis: 0, dims: 2 },
    ])
    .unwrap();
    let g = build_mapper(
        &set,
        &spec,
        None,
        &CoverSpec::uniform(2, 5, 0.3).unwrap(),
        &ClusterSpec::default(),
    )
    .unwrap();
    for v in &g.vertices {
        let labels: BTreeSet<usize> = v.members.iter().map(|id| set.by_id(id).unwrap().label).collect();
        assert_eq!(labels.len(), 1);
        assert_eq!(v.purity, 1.0);
        assert_eq!(labels.into_iter().next(), Some(v.dominant_label));
    }
    for e in &g.edges {
        assert_eq!(g.vertices[e.source].dominant_label, g.vertices[e.target].dominant_label);
    }
    // Every record lands in some vertex.
    assert_eq!(g.covered_ids().len(), set.len());
}

#[test]
fn construction_is_deterministic() {
    let set = synthetic_records();
    let spec = FilterSpec::new(vec![FilterComponent::GroundTruthLabel, FilterComponent::MeanPredConf]).unwrap();
    let cover = CoverSpec::uniform(1, 10, 0.3).unwrap();
    let a = build_mapper(&set, &spec, None, &cover, &ClusterSpec::default()).unwrap();
    let b = build_mapper(&set, &spec, None, &cover, &ClusterSpec::default()).unwrap();
    assert_eq!(a, b);
    let keys: Vec<(Vec<usize>, usize)> = a.vertices.iter().map(|v| (v.cell.clone(), v.cluster)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn raising_gain_only_adds_memberships(
        values in prop::collection::vec((-50.0..50.0_f64, -5.0..5.0_f64), 2..60),
        resolution in 1usize..12,
        g1 in 0.0..0.8_f64,
        dg in 0.0..0.1_f64,
    ) {
        let mut table = CoordinateTable::new(2);
        let recs: Vec<PredictionRecord> = values
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| {
                table.insert(format!("r{i}"), vec![a, b]).unwrap();
                PredictionRecord {
                    id: format!("r{i}"),
                    label: 0,
                    mean_pred_conf: 0.5,
                    mean_truth_conf: 0.5,
                    tokens: vec![],
                    embedding: vec![a, b],
                }
            })
            .collect();
        let set = RecordSet::new(recs, 1).unwrap();
        let spec = FilterSpec::new(vec![FilterComponent::ExternalCoord(0), FilterComponent::ExternalCoord(1)]).unwrap();
        let m = compose_filters(&set, &spec, Some(&table)).unwrap();
        let low = build_cover(&m, &CoverSpec::uniform(2, resolution, g1).unwrap()).unwrap();
        let high = build_cover(&m, &CoverSpec::uniform(2, resolution, g1 + dg).unwrap()).unwrap();
        for i in 0..set.len() {
            let a: BTreeSet<&Vec<usize>> = low.keys_of(i).into_iter().collect();
            let b: BTreeSet<&Vec<usize>> = high.keys_of(i).into_iter().collect();
            prop_assert!(!a.is_empty());
            prop_assert!(a.is_subset(&b));
        }
    }
}
