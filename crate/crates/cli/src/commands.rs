use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use topoexplain::explain::{
    explain_record, rank_features, ranking_diff, select_high_accuracy, ExplanationVector, FeatureRanking,
};
use topoexplain::lens::{load_coordinates, CoordinateTable};
use topoexplain::mapper::{build_mapper, export, MapperGraph};
use topoexplain::records::{
    load_embeddings, load_records, write_embeddings, write_records, EmbeddingTable, RecordFormat, RecordSet,
};
use topoexplain::refmodel::{emit_records, generate_corpus, train_toy, Corpus, ToyModel};
use topoexplain::stability::{
    baseline_explain, lipschitz_constant, median_same_label_distance, record_seed, StabilityReport,
};
use topoexplain::Error;

use crate::config::{EpsilonMode, Plan};
use crate::staging::Staging;
use crate::CliError;

/// Records plus whatever the source provides alongside them.
struct Loaded {
    records: RecordSet,
    embeddings: Option<EmbeddingTable>,
    coordinates: Option<CoordinateTable>,
    synthetic: Option<Synthetic>,
}

struct Synthetic {
    corpus: Corpus,
    model: ToyModel,
    train_accuracy: f64,
}

/// Input files failing their format invariants are validation errors; I/O
/// failures stay runtime errors.
fn ingest<T>(r: Result<T, Error>) -> Result<T, CliError> {
    r.map_err(|e| match e {
        Error::Io { .. } => CliError::Runtime(e),
        other => CliError::Validation(other.to_string()),
    })
}

fn load(plan: &Plan) -> Result<Loaded, CliError> {
    if let Some(input) = &plan.config.input {
        let records = ingest(load_records(&input.records, input.record_format()?))?;
        let embeddings = input.embeddings.as_ref().map(load_embeddings).transpose();
        let coordinates = input.coordinates.as_ref().map(load_coordinates).transpose();
        return Ok(Loaded {
            records,
            embeddings: ingest(embeddings)?,
            coordinates: ingest(coordinates)?,
            synthetic: None,
        });
    }
    let syn = plan.config.synthetic.as_ref().expect("validated: input or synthetic");
    let seeds = plan.seeds;
    let corpus = generate_corpus(&syn.corpus_spec(seeds.corpus))?;
    let model = train_toy(&corpus.documents, &corpus.embeddings, &syn.train_config(seeds.training))?;
    let train_accuracy = model.accuracy(&corpus.documents);
    let records = emit_records(&model, &corpus.documents, syn.passes, seeds.prediction)?;
    Ok(Loaded {
        records,
        embeddings: Some(model.embedding_table()),
        coordinates: None,
        synthetic: Some(Synthetic {
            corpus,
            model,
            train_accuracy,
        }),
    })
}

fn graph(plan: &Plan, loaded: &Loaded) -> Result<MapperGraph, CliError> {
    Ok(build_mapper(
        &loaded.records,
        &plan.filters,
        loaded.coordinates.as_ref(),
        &plan.cover,
        &plan.config.cluster,
    )?)
}

fn json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Serialize(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Serialize)]
struct GraphSummary {
    records: usize,
    vertices: usize,
    edges: usize,
    components: usize,
    cycle_components: usize,
    label_components: BTreeMap<usize, usize>,
    cross_label_edges: usize,
    uncovered_records: usize,
}

fn summarize(graph: &MapperGraph, records: &RecordSet) -> GraphSummary {
    let comps = graph.components();
    GraphSummary {
        records: records.len(),
        vertices: graph.vertex_count(),
        edges: graph.edge_count(),
        components: comps.len(),
        cycle_components: comps.iter().filter(|c| graph.is_cycle(c)).count(),
        label_components: graph.label_component_counts(),
        cross_label_edges: graph.cross_label_edges().len(),
        uncovered_records: records.len() - graph.covered_ids().len(),
    }
}

/// Writes `graph.{graphml,dot,json}` and `summary.json`.
pub fn cmd_build_mapper(plan: &Plan) -> Result<Vec<PathBuf>, CliError> {
    let mut stage = Staging::new(&plan.config.out_dir)?;
    let loaded = load(plan)?;
    let g = graph(plan, &loaded)?;
    stage.write("graph.graphml", export::to_graphml(&g))?;
    stage.write("graph.dot", export::to_dot(&g))?;
    let mut graph_json = export::to_json(&g)?;
    graph_json.push('\n');
    stage.write("graph.json", graph_json)?;
    stage.write("summary.json", json(&summarize(&g, &loaded.records))?)?;
    stage.commit()
}

fn empty_ranking(label: usize, alpha: f64, m_hat: f64) -> FeatureRanking {
    FeatureRanking {
        label,
        alpha,
        m_hat,
        k: 0,
        n: 0,
        rows: Vec::new(),
        unknown_candidates: Vec::new(),
    }
}

/// Rankings per label for one m̂, with a warning for every label whose
/// high-accuracy set is empty.
fn rankings_at(
    plan: &Plan,
    loaded: &Loaded,
    g: &MapperGraph,
    table: &EmbeddingTable,
    m_hat: f64,
    warnings: &mut Vec<String>,
) -> Result<BTreeMap<usize, FeatureRanking>, CliError> {
    let alpha = plan.config.rank.alpha;
    let mut out = BTreeMap::new();
    for label in loaded.records.labels_present() {
        let hset = select_high_accuracy(g, &loaded.records, label, alpha)?;
        let ranking = if hset.is_empty() {
            warnings.push(format!(
                "label {label}: no vertex reaches alpha {alpha} (m_hat {m_hat})"
            ));
            empty_ranking(label, alpha, m_hat)
        } else {
            match rank_features(&hset, None, table, m_hat) {
                Ok(r) => r,
                Err(Error::Empty(msg)) => {
                    warnings.push(format!("label {label}: {msg}"));
                    empty_ranking(label, alpha, m_hat)
                }
                Err(e) => return Err(e.into()),
            }
        };
        out.insert(label, ranking);
    }
    Ok(out)
}

fn require_embeddings(loaded: &Loaded) -> Result<&EmbeddingTable, CliError> {
    loaded
        .embeddings
        .as_ref()
        .ok_or_else(|| CliError::Validation("ranking needs [input].embeddings".into()))
}

pub fn ranking_file_name(label: usize, m_hat: f64) -> String {
    format!("ranking_label{label}_mhat{m_hat}.tsv")
}

/// One TSV per (label, m̂), `diff.tsv` against the first m̂ of the grid and a
/// markdown report with the top rows of every pair.
pub fn cmd_rank(plan: &Plan) -> Result<Vec<PathBuf>, CliError> {
    if plan.config.input.as_ref().is_some_and(|i| i.embeddings.is_none()) {
        return Err(CliError::Validation("ranking needs [input].embeddings".into()));
    }
    let mut stage = Staging::new(&plan.config.out_dir)?;
    let loaded = load(plan)?;
    let table = require_embeddings(&loaded)?;
    let g = graph(plan, &loaded)?;
    let rank = &plan.config.rank;

    let mut warnings = Vec::new();
    let mut grid: Vec<(f64, BTreeMap<usize, FeatureRanking>)> = Vec::new();
    for &m in &rank.m_hat {
        grid.push((m, rankings_at(plan, &loaded, &g, table, m, &mut warnings)?));
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let (base_m, base) = &grid[0];
    let mut report = String::new();
    let _ = writeln!(report, "# Label-specific feature rankings\n");
    let _ = writeln!(
        report,
        "alpha = {}; rows marked `*` differ from m_hat = {base_m} at the same rank, `+` marks tokens new to its top {}.\n",
        rank.alpha, rank.top
    );
    let mut diff = String::from("label\tm_hat\tbaseline_m_hat\trank\ttoken\tbaseline_token\tchanged\tnew\n");
    for (m, rankings) in &grid {
        for (label, ranking) in rankings {
            stage.write(&ranking_file_name(*label, *m), ranking.to_tsv())?;
            let rows = ranking_diff(&base[label], ranking, rank.top);
            let _ = writeln!(
                report,
                "## label {label}, m_hat = {m} (K = {}, N = {})\n",
                ranking.k, ranking.n
            );
            if rows.is_empty() {
                let _ = writeln!(report, "_no qualifying vertices_\n");
                continue;
            }
            let _ = writeln!(report, "| rank | token | dtm | mark |\n|---:|---|---:|:---:|");
            for r in &rows {
                let mark = match (r.changed(), r.new) {
                    (_, true) => "+",
                    (true, false) => "*",
                    _ => "",
                };
                let _ = writeln!(report, "| {} | {} | {} | {mark} |", r.rank, r.token, r.dtm);
                let _ = writeln!(
                    diff,
                    "{label}\t{m}\t{base_m}\t{}\t{}\t{}\t{}\t{}",
                    r.rank,
                    r.token,
                    r.baseline_token.as_deref().unwrap_or("-"),
                    r.changed(),
                    r.new
                );
            }
            report.push('\n');
        }
    }
    if !warnings.is_empty() {
        let _ = writeln!(report, "## Warnings\n");
        for w in &warnings {
            let _ = writeln!(report, "- {w}");
        }
    }
    stage.write("diff.tsv", diff)?;
    stage.write("report.md", report)?;
    stage.commit()
}

fn constant_explanation(record: &topoexplain::records::PredictionRecord) -> ExplanationVector {
    ExplanationVector {
        record_id: record.id.clone(),
        label: record.label,
        weights: BTreeMap::from([("constant".to_string(), 1.0)]),
    }
}

/// Lipschitz reports for our explainer and the perturbation baseline, as two
/// JSON files and a side-by-side CSV.
pub fn cmd_stability(plan: &Plan) -> Result<Vec<PathBuf>, CliError> {
    let st = &plan.config.stability;
    if plan.config.input.is_some() && !st.smoke {
        return Err(CliError::Validation(
            "the perturbation baseline needs the reference model: use [synthetic] or stability.smoke".into(),
        ));
    }
    let mut stage = Staging::new(&plan.config.out_dir)?;
    let loaded = load(plan)?;
    let records = &loaded.records;
    if st.sample_size > records.len() {
        return Err(CliError::Validation(format!(
            "stability.sample_size {} exceeds the {} available records",
            st.sample_size,
            records.len()
        )));
    }
    let epsilon = match st.epsilon {
        EpsilonMode::Value(e) => e,
        EpsilonMode::Named(_) => median_same_label_distance(records)
            .ok_or_else(|| Error::Empty("no same-label record pairs for the median distance".into()))?,
    };
    let sampling = plan.seeds.sampling;

    let (ours, baseline) = if st.smoke {
        let ours = lipschitz_constant(
            "smoke-ours",
            |r| Ok(constant_explanation(r)),
            records,
            st.sample_size,
            epsilon,
            sampling,
        )?;
        let base = lipschitz_constant(
            "smoke-baseline",
            |r| Ok(constant_explanation(r)),
            records,
            st.sample_size,
            epsilon,
            sampling,
        )?;
        (ours, base)
    } else {
        let syn = loaded.synthetic.as_ref().expect("non-smoke runs are synthetic");
        let table = require_embeddings(&loaded)?;
        let g = graph(plan, &loaded)?;
        let mut warnings = Vec::new();
        let rankings = rankings_at(plan, &loaded, &g, table, st.m_hat, &mut warnings)?;
        for w in &warnings {
            eprintln!("warning: {w}");
        }
        let ours = lipschitz_constant(
            "ours",
            |r| explain_record(r, &rankings),
            records,
            st.sample_size,
            epsilon,
            sampling,
        )?;
        let base_seed = plan.seeds.baseline;
        let base = lipschitz_constant(
            "baseline",
            |r| baseline_explain(r, &syn.model, &st.baseline, record_seed(base_seed, &r.id)),
            records,
            st.sample_size,
            epsilon,
            sampling,
        )?;
        (ours, base)
    };

    stage.write("stability_ours.json", json(&ours)?)?;
    stage.write("stability_baseline.json", json(&baseline)?)?;
    let csv = format!(
        "{}\n{}\n{}\n",
        StabilityReport::CSV_HEADER,
        ours.csv_row(),
        baseline.csv_row()
    );
    stage.write("stability.csv", csv)?;
    stage.commit()
}

#[derive(Debug, Serialize)]
struct SynthSummary {
    documents: usize,
    classes: usize,
    vocabulary: usize,
    train_accuracy: f64,
    corpus_seed: u64,
    training_seed: u64,
    prediction_seed: u64,
}

/// Runs the reference pipeline and writes the corpus, its keyword oracle,
/// the trained token embeddings and the emitted records.
pub fn cmd_synth(plan: &Plan) -> Result<Vec<PathBuf>, CliError> {
    if plan.config.synthetic.is_none() {
        return Err(CliError::Validation("synth needs a [synthetic] section".into()));
    }
    let mut stage = Staging::new(&plan.config.out_dir)?;
    let loaded = load(plan)?;
    let syn = loaded.synthetic.as_ref().expect("synthetic run");
    stage.write("corpus.jsonl", syn.corpus.documents_jsonl()?)?;
    stage.write("oracle.tsv", syn.corpus.oracle_tsv())?;
    let table = loaded.embeddings.as_ref().expect("synthetic runs carry embeddings");
    write_embeddings(stage.path("embeddings.tsv"), table)?;
    write_records(stage.path("records.csv"), &loaded.records, RecordFormat::Csv)?;
    let summary = SynthSummary {
        documents: syn.corpus.documents.len(),
        classes: syn.model.classes(),
        vocabulary: table.len(),
        train_accuracy: syn.train_accuracy,
        corpus_seed: plan.seeds.corpus,
        training_seed: plan.seeds.training,
        prediction_seed: plan.seeds.prediction,
    };
    stage.write("synth_summary.json", json(&summary)?)?;
    stage.commit()
}
