//! Label-specific Lipschitz stability of explanations, and a perturbation
//! baseline explainer (sampled token masks fitted by weighted ridge
//! regression) to compare against.
//!
//! For a sampled record `x`:
//!
//! ```text
//! L(x) = max over same-label x' with 0 < ‖x − x'‖ ≤ ε of ‖g(x) − g(x')‖ / ‖x − x'‖
//! ```
//!
//! Input distances are Euclidean in document-embedding space; explanation
//! distances are ℓ₂ over the union of supports. A record with no neighbour
//! scores 0.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::ExplanationVector;
use crate::records::{PredictionRecord, RecordSet};
use crate::scalar::euclidean;

pub const CONVENTIONS: &str =
    "input: euclidean on embeddings; explanation: l2 over union of supports; empty neighbourhood: 0; zero-distance pairs excluded";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordLipschitz {
    pub id: String,
    pub value: f64,
    pub neighbours: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub method: String,
    pub seed: u64,
    pub epsilon: f64,
    pub sample_size: usize,
    pub values: Vec<RecordLipschitz>,
    pub maximum: f64,
    pub empty_neighbourhoods: usize,
    /// Sampled records whose explanation failed.
    pub skipped: Vec<String>,
    pub conventions: String,
}

impl StabilityReport {
    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().map(|v| v.value).sum::<f64>() / self.values.len() as f64
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub const CSV_HEADER: &'static str = "method,seed,epsilon,sample_size,maximum,mean,empty_neighbourhoods,skipped";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.method,
            self.seed,
            self.epsilon,
            self.sample_size,
            self.maximum,
            self.mean(),
            self.empty_neighbourhoods,
            self.skipped.len()
        )
    }
}

/// Evaluates `L(x)` on `sample_size` seeded-random records.
pub fn lipschitz_constant<F>(
    method: &str,
    explainer: F,
    records: &RecordSet,
    sample_size: usize,
    epsilon: f64,
    seed: u64,
) -> Result<StabilityReport>
where
    F: Fn(&PredictionRecord) -> Result<ExplanationVector> + Sync,
{
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let n = records.len();
    if sample_size > n {
        return Err(Error::invalid(format!(
            "sample size {sample_size} exceeds record count {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled = index::sample(&mut rng, n, sample_size).into_vec();
    sampled.sort_unstable();

    let recs = records.records();
    let neighbourhoods: Vec<Vec<(usize, f64)>> = sampled
        .par_iter()
        .map(|&i| {
            (0..n)
                .filter(|&j| j != i && recs[j].label == recs[i].label)
                .filter_map(|j| {
                    let d = euclidean(&recs[i].embedding, &recs[j].embedding);
                    (d > 0.0 && d <= epsilon).then_some((j, d))
                })
                .collect()
        })
        .collect();

    let needed: BTreeSet<usize> = sampled
        .iter()
        .copied()
        .chain(neighbourhoods.iter().flatten().map(|&(j, _)| j))
        .collect();
    let needed: Vec<usize> = needed.into_iter().collect();
    let computed: Vec<Option<ExplanationVector>> = needed.par_iter().map(|&i| explainer(&recs[i]).ok()).collect();
    let mut explanations: Vec<Option<&ExplanationVector>> = vec![None; n];
    for (&i, e) in needed.iter().zip(&computed) {
        explanations[i] = e.as_ref();
    }

    let mut values = Vec::with_capacity(sample_size);
    let mut skipped = Vec::new();
    let mut empty = 0;
    for (&i, hood) in sampled.iter().zip(&neighbourhoods) {
        let Some(gi) = explanations[i] else {
            skipped.push(recs[i].id.clone());
            continue;
        };
        let mut best = 0.0_f64;
        let mut used = 0;
        for &(j, d) in hood {
            if let Some(gj) = explanations[j] {
                best = best.max(gi.distance(gj) / d);
                used += 1;
            }
        }
        if used == 0 {
            empty += 1;
        }
        values.push(RecordLipschitz {
            id: recs[i].id.clone(),
            value: best,
            neighbours: used,
        });
    }
    let maximum = values.iter().map(|v| v.value).fold(0.0, f64::max);
    Ok(StabilityReport {
        method: method.to_string(),
        seed,
        epsilon,
        sample_size,
        values,
        maximum,
        empty_neighbourhoods: empty,
        skipped,
        conventions: CONVENTIONS.to_string(),
    })
}

/// Median Euclidean distance over all same-label record pairs.
pub fn median_same_label_distance(records: &RecordSet) -> Option<f64> {
    let recs = records.records();
    let mut d: Vec<f64> = (0..recs.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            (i + 1..recs.len())
                .filter(move |&j| recs[i].label == recs[j].label)
                .map(move |j| euclidean(&recs[i].embedding, &recs[j].embedding))
        })
        .collect();
    if d.is_empty() {
        return None;
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = d.len() / 2;
    Some(if d.len() % 2 == 1 {
        d[m]
    } else {
        0.5 * (d[m - 1] + d[m])
    })
}

/// Class-probability oracle over token multisets.
pub trait ProbabilityModel: Sync {
    fn predict_proba(&self, tokens: &[&str]) -> Result<Vec<f64>>;
}

impl<F> ProbabilityModel for F
where
    F: Fn(&[&str]) -> Result<Vec<f64>> + Sync,
{
    fn predict_proba(&self, tokens: &[&str]) -> Result<Vec<f64>> {
        self(tokens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineExplainerConfig {
    pub n_samples: usize,
    pub kernel_width: f64,
    pub ridge: f64,
    pub top_k: usize,
}

impl Default for BaselineExplainerConfig {
    fn default() -> Self {
        BaselineExplainerConfig {
            n_samples: 500,
            kernel_width: 25.0,
            ridge: 1.0,
            top_k: 10,
        }
    }
}

impl BaselineExplainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0
            || self.top_k == 0
            || !(self.kernel_width > 0.0 && self.kernel_width.is_finite())
            || !(self.ridge > 0.0 && self.ridge.is_finite())
        {
            return Err(Error::invalid(format!(
                "baseline explainer parameters must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Perturbed inputs for one record: masks over its distinct tokens, the
/// model's probability for the record's label on each, and locality weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationDesign {
    pub features: Vec<String>,
    pub masks: Vec<Vec<bool>>,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PerturbationDesign {
    /// Fewer samples than features; the ridge term still makes the fit unique.
    pub fn underdetermined(&self) -> bool {
        self.masks.len() < self.features.len()
    }
}

pub fn perturbation_design<M: ProbabilityModel + ?Sized>(
    record: &PredictionRecord,
    model: &M,
    config: &BaselineExplainerConfig,
    seed: u64,
) -> Result<PerturbationDesign> {
    config.validate()?;
    let features: Vec<String> = record
        .tokens
        .iter()
        .map(String::as_str)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_string)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masks: Vec<Vec<bool>> = (0..config.n_samples)
        .map(|_| features.iter().map(|_| rng.random_bool(0.5)).collect())
        .collect();
    let mut targets = Vec::with_capacity(masks.len());
    let mut weights = Vec::with_capacity(masks.len());
    for mask in &masks {
        let kept: BTreeSet<&str> = features
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(f, _)| f.as_str())
            .collect();
        let input: Vec<&str> = record
            .tokens
            .iter()
            .map(String::as_str)
            .filter(|t| kept.contains(t))
            .collect();
        let proba = model.predict_proba(&input)?;
        let p = *proba.get(record.label).ok_or_else(|| {
            Error::Model(format!(
                "model returned {} classes, label is {}",
                proba.len(),
                record.label
            ))
        })?;
        if !p.is_finite() {
            return Err(Error::Model(format!("non-finite probability {p}")));
        }
        let removed = mask.iter().filter(|m| !**m).count() as f64;
        targets.push(p);
        weights.push((-(removed * removed) / (config.kernel_width * config.kernel_width)).exp());
    }
    Ok(PerturbationDesign {
        features,
        masks,
        targets,
        weights,
    })
}

/// Weighted ridge fit with an unpenalised intercept. Returns the intercept
/// and one coefficient per feature.
pub fn weighted_ridge(design: &PerturbationDesign, ridge: f64) -> Result<(f64, Vec<f64>)> {
    let p = design.features.len();
    let w_total: f64 = design.weights.iter().sum();
    if w_total <= 0.0 {
        return Err(Error::Solve("all locality weights vanished".into()));
    }
    let mut x_mean = vec![0.0; p];
    let mut y_mean = 0.0;
    for ((mask, &y), &w) in design.masks.iter().zip(&design.targets).zip(&design.weights) {
        for (m, &b) in x_mean.iter_mut().zip(mask) {
            if b {
                *m += w;
            }
        }
        y_mean += w * y;
    }
    x_mean.iter_mut().for_each(|m| *m /= w_total);
    y_mean /= w_total;
    if p == 0 {
        return Ok((y_mean, vec![]));
    }

    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut xc = vec![0.0; p];
    for ((mask, &y), &w) in design.masks.iter().zip(&design.targets).zip(&design.weights) {
        for k in 0..p {
            xc[k] = if mask[k] { 1.0 } else { 0.0 } - x_mean[k];
        }
        let yc = y - y_mean;
        for a in 0..p {
            rhs[a] += w * xc[a] * yc;
            for b in a..p {
                gram[(a, b)] += w * xc[a] * xc[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
        gram[(a, a)] += ridge;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Solve("ridge system is not positive definite".into()))?;
    let beta = chol.solve(&rhs);
    let coefs: Vec<f64> = beta.iter().copied().collect();
    let intercept = y_mean - coefs.iter().zip(&x_mean).map(|(c, m)| c * m).sum::<f64>();
    Ok((intercept, coefs))
}

/// Perturbation explanation: top `top_k` ridge coefficients by magnitude,
/// reported as absolute values. Deterministic for a given seed.
pub fn baseline_explain<M: ProbabilityModel + ?Sized>(
    record: &PredictionRecord,
    model: &M,
    config: &BaselineExplainerConfig,
    seed: u64,
) -> Result<ExplanationVector> {
    let design = perturbation_design(record, model, config, seed)?;
    let (_, coefs) = weighted_ridge(&design, config.ridge)?;
    let mut order: Vec<usize> = (0..coefs.len()).collect();
    order.sort_by(|&a, &b| coefs[b].abs().partial_cmp(&coefs[a].abs()).unwrap().then(a.cmp(&b)));
    Ok(ExplanationVector {
        record_id: record.id.clone(),
        label: record.label,
        weights: order
            .into_iter()
            .take(config.top_k)
            .map(|k| (design.features[k].clone(), coefs[k].abs()))
            .collect(),
    })
}

/// Per-record seed derived from a root seed and the record id, so that
/// explanations do not depend on evaluation order.
pub fn record_seed(root: u64, id: &str) -> u64 {
    // FNV-1a over the id, then a splitmix64 finaliser over the combination.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = h ^ root.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
