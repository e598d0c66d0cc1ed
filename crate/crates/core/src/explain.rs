//! Label-specific feature rankings and per-record explanations.
//!
//! For a label, the high-accuracy vertices of a Mapper graph (dominant label
//! matches, mean ground-truth confidence at least `alpha`) define a token
//! multiset. Each candidate token is scored by the dtm of its embedding to
//! that multiset; small values mean the token sits where the label's
//! high-confidence vocabulary concentrates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dtm::{dtm, DtmParams, PointMultiset};
use crate::error::{Error, Result};
use crate::mapper::MapperGraph;
use crate::records::{EmbeddingTable, PredictionRecord, RecordSet};

#[derive(Debug, Clone, PartialEq)]
pub struct HighAccuracySet {
    pub label: usize,
    pub alpha: f64,
    pub vertex_ids: Vec<usize>,
    /// Union of the selected vertices' members, in record-set order.
    pub member_ids: Vec<String>,
    /// Token multiset of the member records.
    pub tokens: BTreeMap<String, usize>,
}

impl HighAccuracySet {
    /// Set when no vertex met the threshold.
    pub fn is_empty(&self) -> bool {
        self.vertex_ids.is_empty()
    }

    /// Multiset size, counting multiplicity.
    pub fn token_total(&self) -> usize {
        self.tokens.values().sum()
    }

    /// Embeds the token multiset, skipping tokens absent from `table`.
    pub fn embed(&self, table: &EmbeddingTable) -> Result<EmbeddedMultiset> {
        let mut points = PointMultiset::new(table.dim());
        let mut tokens = Vec::new();
        let mut skipped = BTreeMap::new();
        for (tok, &count) in &self.tokens {
            match table.get(tok) {
                Some(v) => {
                    points.push(v, count)?;
                    tokens.push(tok.clone());
                }
                None => {
                    skipped.insert(tok.clone(), count);
                }
            }
        }
        Ok(EmbeddedMultiset {
            points,
            tokens,
            skipped,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedMultiset {
    pub points: PointMultiset<f64>,
    /// Token of each stored row.
    pub tokens: Vec<String>,
    /// Tokens without an embedding, with their multiplicities.
    pub skipped: BTreeMap<String, usize>,
}

/// Vertices with dominant label `label` and mean ground-truth confidence at least `alpha`.
pub fn select_high_accuracy(
    graph: &MapperGraph,
    records: &RecordSet,
    label: usize,
    alpha: f64,
) -> Result<HighAccuracySet> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if !records.iter().any(|r| r.label == label) {
        return Err(Error::LabelAbsent(label));
    }
    let vertex_ids: Vec<usize> = graph
        .vertices
        .iter()
        .filter(|v| v.dominant_label == label && v.mean_truth_conf >= alpha)
        .map(|v| v.id)
        .collect();
    let mut member_idx = BTreeSet::new();
    for &v in &vertex_ids {
        for id in &graph.vertices[v].members {
            let i = records
                .index_of(id)
                .ok_or_else(|| Error::invalid(format!("graph member `{id}` is not in the record set")))?;
            member_idx.insert(i);
        }
    }
    let mut tokens = BTreeMap::new();
    let mut member_ids = Vec::with_capacity(member_idx.len());
    for i in member_idx {
        let r = &records.records()[i];
        member_ids.push(r.id.clone());
        for t in &r.tokens {
            *tokens.entry(t.clone()).or_insert(0) += 1;
        }
    }
    Ok(HighAccuracySet {
        label,
        alpha,
        vertex_ids,
        member_ids,
        tokens,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub token: String,
    pub dtm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub label: usize,
    pub alpha: f64,
    pub m_hat: f64,
    /// Neighbour count used for every row.
    pub k: usize,
    /// Embedded multiset size.
    pub n: usize,
    /// Ascending by dtm, ties by token.
    pub rows: Vec<RankRow>,
    /// Candidates without an embedding; excluded from `rows`.
    pub unknown_candidates: Vec<String>,
}

impl FeatureRanking {
    pub fn dtm_of(&self, token: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.token == token).map(|r| r.dtm)
    }

    pub fn top(&self, n: usize) -> &[RankRow] {
        &self.rows[..n.min(self.rows.len())]
    }

    /// Header block followed by `rank\ttoken\tdtm` rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# label: {}", self.label);
        let _ = writeln!(out, "# alpha: {}", self.alpha);
        let _ = writeln!(out, "# m_hat: {}", self.m_hat);
        let _ = writeln!(out, "# K: {}", self.k);
        let _ = writeln!(out, "# N: {}", self.n);
        out.push_str("rank\ttoken\tdtm\n");
        for (i, r) in self.rows.iter().enumerate() {
            let _ = writeln!(out, "{}\t{}\t{}", i + 1, r.token, r.dtm);
        }
        out
    }
}

/// Scores candidates by their dtm to the set's embedded token multiset.
/// `candidates` defaults to the distinct tokens of `hset`.
pub fn rank_features(
    hset: &HighAccuracySet,
    candidates: Option<&BTreeSet<String>>,
    table: &EmbeddingTable,
    m_hat: f64,
) -> Result<FeatureRanking> {
    let params = DtmParams::new(m_hat)?;
    let embedded = hset.embed(table)?;
    if embedded.points.is_empty() {
        return Err(Error::Empty(format!(
            "no embedded tokens for label {} at alpha {}",
            hset.label, hset.alpha
        )));
    }
    let default_candidates: BTreeSet<String>;
    let candidates = match candidates {
        Some(c) => c,
        None => {
            default_candidates = hset.tokens.keys().cloned().collect();
            &default_candidates
        }
    };
    let (known, unknown): (Vec<&String>, Vec<&String>) = candidates.iter().partition(|t| table.contains(t));
    let mut rows = known
        .par_iter()
        .map(|&t| {
            let v = table.get(t).expect("partitioned on presence");
            dtm(v, &embedded.points, params).map(|d| RankRow {
                token: t.clone(),
                dtm: d,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.dtm.partial_cmp(&b.dtm).unwrap().then_with(|| a.token.cmp(&b.token)));
    let n = embedded.points.len();
    Ok(FeatureRanking {
        label: hset.label,
        alpha: hset.alpha,
        m_hat,
        k: params.k_for(n),
        n,
        rows,
        unknown_candidates: unknown.into_iter().cloned().collect(),
    })
}

/// Sparse token to importance map for one record.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExplanationVector {
    pub record_id: String,
    pub label: usize,
    pub weights: BTreeMap<String, f64>,
}

impl ExplanationVector {
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// ℓ₂ distance over the union of supports; absent tokens count as zero.
    pub fn distance(&self, other: &ExplanationVector) -> f64 {
        let keys: BTreeSet<&String> = self.weights.keys().chain(other.weights.keys()).collect();
        keys.into_iter()
            .map(|k| {
                let a = self.weights.get(k).copied().unwrap_or(0.0);
                let b = other.weights.get(k).copied().unwrap_or(0.0);
                (a - b) * (a - b)
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Weights `exp(-dtm)` over the record's tokens present in its label's
/// ranking, normalised to unit sum. An empty support gives an empty vector.
pub fn explain_record(
    record: &PredictionRecord,
    rankings: &BTreeMap<usize, FeatureRanking>,
) -> Result<ExplanationVector> {
    let ranking = rankings.get(&record.label).ok_or(Error::NoRanking(record.label))?;
    let scores: BTreeMap<&str, f64> = ranking.rows.iter().map(|r| (r.token.as_str(), r.dtm)).collect();
    let support: BTreeMap<&str, f64> = record
        .tokens
        .iter()
        .filter_map(|t| scores.get(t.as_str()).map(|&d| (t.as_str(), d)))
        .collect();
    let mut out = ExplanationVector {
        record_id: record.id.clone(),
        label: record.label,
        weights: BTreeMap::new(),
    };
    if support.is_empty() {
        return Ok(out);
    }
    // Shifting by the minimum leaves the normalised weights unchanged and
    // keeps exp() away from underflow.
    let min = support.values().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<(&str, f64)> = support.iter().map(|(t, d)| (*t, (-(d - min)).exp())).collect();
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    out.weights = raw.into_iter().map(|(t, w)| (t.to_string(), w / total)).collect();
    Ok(out)
}

/// One row of a ranking comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffRow {
    pub rank: usize,
    pub token: String,
    pub dtm: f64,
    /// Token at the same rank in the baseline ranking, if any.
    pub baseline_token: Option<String>,
    /// The token does not appear in the baseline's top rows.
    pub new: bool,
}

impl DiffRow {
    pub fn changed(&self) -> bool {
        self.baseline_token.as_deref() != Some(self.token.as_str())
    }
}

/// Compares the top `n` rows of `current` against `baseline`, marking rows
/// whose token differs at that rank and tokens new to the top `n`.
pub fn ranking_diff(baseline: &FeatureRanking, current: &FeatureRanking, n: usize) -> Vec<DiffRow> {
    let base_top = baseline.top(n);
    let base_set: BTreeSet<&str> = base_top.iter().map(|r| r.token.as_str()).collect();
    current
        .top(n)
        .iter()
        .enumerate()
        .map(|(i, r)| DiffRow {
            rank: i + 1,
            token: r.token.clone(),
            dtm: r.dtm,
            baseline_token: base_top.get(i).map(|b| b.token.clone()),
            new: !base_set.contains(r.token.as_str()),
        })
        .collect()
}
