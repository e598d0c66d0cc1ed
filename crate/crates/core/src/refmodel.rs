//! Desk-scale reference pipeline: a planted-keyword corpus and a toy
//! classifier (mean-pooled token embeddings, linear softmax head, dropout on
//! the pooled vector) that turns documents into [`PredictionRecord`]s.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::{EmbeddingTable, PredictionRecord, RecordSet};
use crate::stability::ProbabilityModel;

/// Norm scale of the class-specific keyword centres.
const CLASS_CENTRE_SCALE: f64 = 3.0;
/// Standard deviation of planted keywords around their class centre.
const KEYWORD_SPREAD: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub class_count: usize,
    pub docs_per_class: usize,
    pub planted_keywords_per_class: usize,
    pub shared_noise_vocab_size: usize,
    pub doc_length: usize,
    /// Probability that a token is drawn from the class's planted set.
    pub keyword_rate: f64,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            class_count: 4,
            docs_per_class: 200,
            planted_keywords_per_class: 10,
            shared_noise_vocab_size: 200,
            doc_length: 200,
            keyword_rate: 0.5,
            embedding_dim: 16,
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("class_count", self.class_count),
            ("docs_per_class", self.docs_per_class),
            ("planted_keywords_per_class", self.planted_keywords_per_class),
            ("shared_noise_vocab_size", self.shared_noise_vocab_size),
            ("doc_length", self.doc_length),
            ("embedding_dim", self.embedding_dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        if !(self.keyword_rate > 0.0 && self.keyword_rate < 1.0) {
            return Err(Error::invalid(format!(
                "keyword_rate must lie in (0, 1), got {}",
                self.keyword_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub tokens: Vec<String>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    /// Planted keywords of each class.
    pub planted: Vec<Vec<String>>,
    pub embeddings: EmbeddingTable,
}

impl Corpus {
    /// One JSON object per document.
    pub fn documents_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for d in &self.documents {
            out.push_str(&serde_json::to_string(d).map_err(|e| Error::Serialize(e.to_string()))?);
            out.push('\n');
        }
        Ok(out)
    }

    /// `label\ttoken` per planted keyword.
    pub fn oracle_tsv(&self) -> String {
        let mut out = String::from("label\ttoken\n");
        for (label, words) in self.planted.iter().enumerate() {
            for w in words {
                let _ = writeln!(out, "{label}\t{w}");
            }
        }
        out
    }
}

pub fn keyword_token(class: usize, j: usize) -> String {
    format!("c{class}_kw{j:02}")
}

pub fn noise_token(j: usize) -> String {
    format!("w{j:04}")
}

/// Draws a planted-keyword corpus. Deterministic in `spec.seed`.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let e = spec.embedding_dim;

    let mut embeddings = EmbeddingTable::new(e);
    let mut planted = Vec::with_capacity(spec.class_count);
    for c in 0..spec.class_count {
        let centre: Vec<f64> = (0..e).map(|_| CLASS_CENTRE_SCALE * unit.sample(&mut rng)).collect();
        let words: Vec<String> = (0..spec.planted_keywords_per_class)
            .map(|j| keyword_token(c, j))
            .collect();
        for w in &words {
            let v = centre
                .iter()
                .map(|m| m + KEYWORD_SPREAD * unit.sample(&mut rng))
                .collect();
            embeddings.insert(w.clone(), v)?;
        }
        planted.push(words);
    }
    let noise: Vec<String> = (0..spec.shared_noise_vocab_size).map(noise_token).collect();
    for w in &noise {
        embeddings.insert(w.clone(), (0..e).map(|_| unit.sample(&mut rng)).collect())?;
    }

    let mut documents = Vec::with_capacity(spec.class_count * spec.docs_per_class);
    for label in 0..spec.class_count {
        for _ in 0..spec.docs_per_class {
            let tokens = (0..spec.doc_length)
                .map(|_| {
                    if rng.random_bool(spec.keyword_rate) {
                        planted[label][rng.random_range(0..planted[label].len())].clone()
                    } else {
                        noise[rng.random_range(0..noise.len())].clone()
                    }
                })
                .collect();
            documents.push(Document { tokens, label });
        }
    }
    Ok(Corpus {
        documents,
        planted,
        embeddings,
    })
}

/// Mean-pooled embedding classifier with a linear softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    vocab: IndexMap<String, usize>,
    dim: usize,
    classes: usize,
    /// Row-major `vocab × dim`.
    embeddings: Vec<f64>,
    /// Row-major `classes × dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    dropout_rate: f64,
}

/// Gradient of the mean cross-entropy, laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub embeddings: Vec<f64>,
}

impl ToyModel {
    /// Zero-initialised head over the given token embeddings.
    pub fn new(table: &EmbeddingTable, classes: usize, dropout_rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::invalid(format!(
                "dropout_rate must lie in [0, 1), got {dropout_rate}"
            )));
        }
        if classes == 0 {
            return Err(Error::invalid("a model needs at least one class"));
        }
        let dim = table.dim();
        let mut vocab = IndexMap::with_capacity(table.len());
        let mut embeddings = Vec::with_capacity(table.len() * dim);
        for (i, (tok, v)) in table.iter().enumerate() {
            vocab.insert(tok.to_string(), i);
            embeddings.extend_from_slice(v);
        }
        Ok(ToyModel {
            vocab,
            dim,
            classes,
            embeddings,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
            dropout_rate,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    /// Current (possibly trained) token embeddings.
    pub fn embedding_table(&self) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(self.dim);
        for (tok, &i) in &self.vocab {
            t.insert(tok.clone(), self.embedding(i).to_vec())
                .expect("vocab tokens are unique");
        }
        t
    }

    fn embedding(&self, i: usize) -> &[f64] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }

    fn token_ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .filter_map(|t| self.vocab.get(t.as_ref()).copied())
            .collect()
    }

    fn pool_ids(&self, ids: &[usize]) -> Vec<f64> {
        let mut h = vec![0.0; self.dim];
        if ids.is_empty() {
            return h;
        }
        for &i in ids {
            for (a, x) in h.iter_mut().zip(self.embedding(i)) {
                *a += x;
            }
        }
        let n = ids.len() as f64;
        h.iter_mut().for_each(|a| *a /= n);
        h
    }

    /// Mean of the embeddings of known tokens; zero when none are known.
    pub fn pool<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        self.pool_ids(&self.token_ids(tokens))
    }

    /// Softmax output on a pooled vector.
    pub fn head(&self, pooled: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = (0..self.classes)
            .map(|c| {
                self.bias[c]
                    + self.weights[c * self.dim..(c + 1) * self.dim]
                        .iter()
                        .zip(pooled)
                        .map(|(w, h)| w * h)
                        .sum::<f64>()
            })
            .collect();
        softmax(&logits)
    }

    /// Deterministic forward pass (no dropout).
    pub fn predict<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        self.head(&self.pool(tokens))
    }

    /// One stochastic pass: units of the pooled vector are kept with
    /// probability `1 − dropout_rate` and rescaled by `1 / (1 − dropout_rate)`.
    pub fn dropout_forward<R: Rng + ?Sized>(&self, pooled: &[f64], rng: &mut R) -> Vec<f64> {
        let keep = 1.0 - self.dropout_rate;
        if self.dropout_rate == 0.0 {
            return self.head(pooled);
        }
        let masked: Vec<f64> = pooled
            .iter()
            .map(|&h| if rng.random_bool(keep) { h / keep } else { 0.0 })
            .collect();
        self.head(&masked)
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len() + self.embeddings.len()
    }

    /// Flat parameter access: weights, then bias, then embeddings.
    pub fn param(&self, i: usize) -> f64 {
        let (w, b) = (self.weights.len(), self.bias.len());
        if i < w {
            self.weights[i]
        } else if i < w + b {
            self.bias[i - w]
        } else {
            self.embeddings[i - w - b]
        }
    }

    pub fn set_param(&mut self, i: usize, v: f64) {
        let (w, b) = (self.weights.len(), self.bias.len());
        if i < w {
            self.weights[i] = v;
        } else if i < w + b {
            self.bias[i - w] = v;
        } else {
            self.embeddings[i - w - b] = v;
        }
    }

    /// Mean cross-entropy without dropout.
    pub fn loss(&self, documents: &[Document]) -> f64 {
        let total: f64 = documents
            .iter()
            .map(|d| -self.predict(&d.tokens)[d.label].max(f64::MIN_POSITIVE).ln())
            .sum();
        total / documents.len().max(1) as f64
    }

    /// Mean cross-entropy and its gradient. With `rng`, a dropout mask is
    /// drawn per document and the gradient is that of the masked network.
    pub fn loss_and_gradient<R: Rng + ?Sized>(
        &self,
        documents: &[Document],
        mut rng: Option<&mut R>,
    ) -> (f64, Gradient) {
        let mut grad = Gradient {
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
            embeddings: vec![0.0; self.embeddings.len()],
        };
        let n = documents.len().max(1) as f64;
        let keep = 1.0 - self.dropout_rate;
        let mut loss = 0.0;
        for d in documents {
            let ids = self.token_ids(&d.tokens);
            let pooled = self.pool_ids(&ids);
            // Effective per-unit scale: mask / keep, or 1 without dropout.
            let scale: Vec<f64> = match rng.as_deref_mut() {
                Some(r) if self.dropout_rate > 0.0 => (0..self.dim)
                    .map(|_| if r.random_bool(keep) { 1.0 / keep } else { 0.0 })
                    .collect(),
                _ => vec![1.0; self.dim],
            };
            let h: Vec<f64> = pooled.iter().zip(&scale).map(|(a, s)| a * s).collect();
            let p = self.head(&h);
            loss -= p[d.label].max(f64::MIN_POSITIVE).ln();
            let delta: Vec<f64> = (0..self.classes)
                .map(|c| p[c] - if c == d.label { 1.0 } else { 0.0 })
                .collect();
            let mut dh = vec![0.0; self.dim];
            for (c, &dc) in delta.iter().enumerate() {
                grad.bias[c] += dc / n;
                let row = c * self.dim;
                for j in 0..self.dim {
                    grad.weights[row + j] += dc * h[j] / n;
                    dh[j] += dc * self.weights[row + j];
                }
            }
            if !ids.is_empty() {
                let per_token = 1.0 / (ids.len() as f64 * n);
                for &t in &ids {
                    let row = t * self.dim;
                    for j in 0..self.dim {
                        grad.embeddings[row + j] += dh[j] * scale[j] * per_token;
                    }
                }
            }
        }
        (loss / n, grad)
    }

    fn step(&mut self, grad: &Gradient, lr: f64) {
        for (p, g) in self.weights.iter_mut().zip(&grad.weights) {
            *p -= lr * g;
        }
        for (p, g) in self.bias.iter_mut().zip(&grad.bias) {
            *p -= lr * g;
        }
        for (p, g) in self.embeddings.iter_mut().zip(&grad.embeddings) {
            *p -= lr * g;
        }
    }

    /// Fraction of documents whose deterministic prediction matches the label.
    pub fn accuracy(&self, documents: &[Document]) -> f64 {
        let hits = documents
            .iter()
            .filter(|d| argmax(&self.predict(&d.tokens)) == d.label)
            .count();
        hits as f64 / documents.len().max(1) as f64
    }
}

impl ProbabilityModel for ToyModel {
    fn predict_proba(&self, tokens: &[&str]) -> Result<Vec<f64>> {
        Ok(self.predict(tokens))
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &x)| if x > best.1 { (i, x) } else { best },
        )
        .0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            learning_rate: 0.5,
            batch_size: 32,
            dropout_rate: 0.5,
            seed: 1,
        }
    }
}

/// Mini-batch gradient descent on cross-entropy, with dropout on the pooled
/// vector during training. Deterministic in `config.seed`.
pub fn train_toy(documents: &[Document], embeddings: &EmbeddingTable, config: &TrainConfig) -> Result<ToyModel> {
    if documents.is_empty() {
        return Err(Error::Empty("training corpus has no documents".into()));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) || config.batch_size == 0 {
        return Err(Error::invalid("learning rate and batch size must be positive"));
    }
    let classes = documents.iter().map(|d| d.label + 1).max().unwrap_or(1);
    let mut model = ToyModel::new(embeddings, classes, config.dropout_rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..documents.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let docs: Vec<Document> = batch.iter().map(|&i| documents[i].clone()).collect();
            let (loss, grad) = model.loss_and_gradient(&docs, Some(&mut rng));
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            epoch_loss += loss * docs.len() as f64;
            model.step(&grad, config.learning_rate);
        }
        if !epoch_loss.is_finite() || !model.weights.iter().all(|w| w.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McPrediction {
    /// Softmax output averaged over the dropout passes.
    pub mean: Vec<f64>,
    pub predicted: usize,
    /// `mean[label]`.
    pub truth_conf: f64,
}

/// Averages `passes` dropout forward passes; each pass draws its own mask.
pub fn mc_predict(model: &ToyModel, document: &Document, passes: usize, seed: u64) -> Result<McPrediction> {
    if passes == 0 {
        return Err(Error::invalid("at least one pass is required"));
    }
    let pooled = model.pool(&document.tokens);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean = vec![0.0; model.classes];
    for _ in 0..passes {
        for (m, p) in mean.iter_mut().zip(model.dropout_forward(&pooled, &mut rng)) {
            *m += p;
        }
    }
    mean.iter_mut().for_each(|m| *m /= passes as f64);
    let truth_conf = *mean.get(document.label).ok_or(Error::LabelOutOfRange {
        label: document.label,
        class_count: model.classes,
    })?;
    Ok(McPrediction {
        predicted: argmax(&mean),
        truth_conf,
        mean,
    })
}

/// Seed of document `i`'s dropout passes.
fn document_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64)
}

pub fn document_id(i: usize) -> String {
    format!("doc{i:05}")
}

/// One record per document: deterministic pooled embedding, Monte-Carlo
/// dropout confidences, tokens copied.
pub fn emit_records(model: &ToyModel, documents: &[Document], passes: usize, seed: u64) -> Result<RecordSet> {
    let records = documents
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let pred = mc_predict(model, d, passes, document_seed(seed, i))?;
            Ok(PredictionRecord {
                id: document_id(i),
                label: d.label,
                mean_pred_conf: pred.mean[pred.predicted].clamp(0.0, 1.0),
                mean_truth_conf: pred.truth_conf.clamp(0.0, 1.0),
                tokens: d.tokens.clone(),
                embedding: model.pool(&d.tokens),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    RecordSet::new(records, model.classes)
}

/// Distinct tokens appearing in documents of `label`, with counts, sorted by
/// descending count then token.
pub fn class_frequencies(documents: &[Document], label: usize) -> Vec<(String, usize)> {
    let mut counts: IndexMap<&str, usize> = IndexMap::new();
    for d in documents.iter().filter(|d| d.label == label) {
        for t in &d.tokens {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let mut out: Vec<(String, usize)> = counts.into_iter().map(|(t, c)| (t.to_string(), c)).collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Planted keywords of `label` as a set.
pub fn planted_set(corpus: &Corpus, label: usize) -> BTreeSet<&str> {
    corpus.planted[label].iter().map(String::as_str).collect()
}
