//! TOML run configuration and its validation.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use topoexplain::dtm::DtmParams;
use topoexplain::lens::{FilterComponent, FilterSpec};
use topoexplain::mapper::{ClusterSpec, CoverSpec, IntervalSpec};
use topoexplain::records::RecordFormat;
use topoexplain::refmodel::{CorpusSpec, TrainConfig};
use topoexplain::stability::BaselineExplainerConfig;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every random stream derives from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Worker threads; 0 lets rayon decide.
    #[serde(default)]
    pub threads: usize,
    pub input: Option<InputConfig>,
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub lens: LensConfig,
    #[serde(default)]
    pub cover: CoverConfig,
    #[serde(default)]
    pub cluster: ClusterSpec,
    #[serde(default)]
    pub rank: RankConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub records: PathBuf,
    /// `csv` or `jsonl`; inferred from the extension when absent.
    pub format: Option<String>,
    pub embeddings: Option<PathBuf>,
    /// Per-record lens coordinates (`id,c_0,...`).
    pub coordinates: Option<PathBuf>,
}

impl InputConfig {
    pub fn record_format(&self) -> Result<RecordFormat, CliError> {
        let raw = match &self.format {
            Some(f) => f.clone(),
            None => self
                .records
                .extension()
                .and_then(|e| e.to_str())
                .unwrap_or_default()
                .to_ascii_lowercase(),
        };
        raw.parse()
            .map_err(|_| CliError::Validation(format!("unknown record format `{raw}`; use csv or jsonl")))
    }
}

/// Corpus and training settings of the built-in reference pipeline. Seeds
/// are not configured here; they derive from the root seed.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub class_count: usize,
    pub docs_per_class: usize,
    pub planted_keywords_per_class: usize,
    pub shared_noise_vocab_size: usize,
    pub doc_length: usize,
    pub keyword_rate: f64,
    pub embedding_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout_rate: f64,
    /// Monte-Carlo dropout passes per record.
    pub passes: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let c = CorpusSpec::default();
        let t = TrainConfig::default();
        SyntheticConfig {
            class_count: c.class_count,
            docs_per_class: c.docs_per_class,
            planted_keywords_per_class: c.planted_keywords_per_class,
            shared_noise_vocab_size: c.shared_noise_vocab_size,
            doc_length: c.doc_length,
            keyword_rate: c.keyword_rate,
            embedding_dim: c.embedding_dim,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            dropout_rate: t.dropout_rate,
            passes: 30,
        }
    }
}

impl SyntheticConfig {
    pub fn corpus_spec(&self, seed: u64) -> CorpusSpec {
        CorpusSpec {
            class_count: self.class_count,
            docs_per_class: self.docs_per_class,
            planted_keywords_per_class: self.planted_keywords_per_class,
            shared_noise_vocab_size: self.shared_noise_vocab_size,
            doc_length: self.doc_length,
            keyword_rate: self.keyword_rate,
            embedding_dim: self.embedding_dim,
            seed,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            dropout_rate: self.dropout_rate,
            seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LensConfig {
    pub components: Vec<FilterComponent>,
}

impl Default for LensConfig {
    fn default() -> Self {
        LensConfig {
            components: vec![FilterComponent::GroundTruthLabel, FilterComponent::MeanTruthConf],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverConfig {
    /// One entry per numeric lens component, or a single entry for all.
    pub resolution: Vec<usize>,
    pub gain: f64,
}

impl Default for CoverConfig {
    fn default() -> Self {
        CoverConfig {
            resolution: vec![10],
            gain: 0.3,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankConfig {
    pub alpha: f64,
    pub m_hat: Vec<f64>,
    /// Rows per table in the combined report.
    pub top: usize,
}

impl Default for RankConfig {
    fn default() -> Self {
        RankConfig {
            alpha: 0.97,
            m_hat: vec![0.05, 0.1, 0.25],
            top: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum EpsilonMode {
    /// `"median"`: median same-label pairwise embedding distance.
    Named(EpsilonName),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonName {
    Median,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub sample_size: usize,
    pub epsilon: EpsilonMode,
    /// m̂ of the rankings behind our explainer.
    pub m_hat: f64,
    pub baseline: BaselineExplainerConfig,
    /// Replace both explainers by a constant one.
    pub smoke: bool,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            sample_size: 500,
            epsilon: EpsilonMode::Named(EpsilonName::Median),
            m_hat: 0.1,
            baseline: BaselineExplainerConfig::default(),
            smoke: false,
        }
    }
}

/// Seeds of the independent random streams, derived from the root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub corpus: u64,
    pub training: u64,
    pub prediction: u64,
    pub sampling: u64,
    pub baseline: u64,
}

impl Seeds {
    pub fn from_root(root: u64) -> Self {
        Seeds {
            corpus: root,
            training: root.wrapping_add(1),
            prediction: root.wrapping_add(2),
            sampling: root.wrapping_add(3),
            baseline: root.wrapping_add(4),
        }
    }
}

/// Fully checked settings, built before any work starts.
#[derive(Debug, Clone)]
pub struct Plan {
    pub config: RunConfig,
    pub filters: FilterSpec,
    pub cover: CoverSpec,
    pub seeds: Seeds,
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.out_dir);
        if let Some(input) = cfg.input.as_mut() {
            resolve(&mut input.records);
            input.embeddings.as_mut().map(resolve);
            input.coordinates.as_mut().map(resolve);
        }
        Ok(cfg)
    }

    pub fn validate(self) -> Result<Plan, CliError> {
        match (&self.input, &self.synthetic) {
            (Some(_), Some(_)) => return Err(invalid("give either [input] or [synthetic], not both")),
            (None, None) => return Err(invalid("one of [input] or [synthetic] is required")),
            _ => {}
        }
        if let Some(input) = &self.input {
            input.record_format()?;
        }
        if let Some(syn) = &self.synthetic {
            syn.corpus_spec(0).validate().map_err(invalid)?;
            if !(0.0..1.0).contains(&syn.dropout_rate) {
                return Err(invalid(format!(
                    "dropout_rate must lie in [0, 1), got {}",
                    syn.dropout_rate
                )));
            }
            if !(syn.learning_rate > 0.0 && syn.learning_rate.is_finite()) || syn.batch_size == 0 || syn.passes == 0 {
                return Err(invalid("learning_rate, batch_size and passes must be positive"));
            }
        }

        let filters = FilterSpec::new(self.lens.components.clone()).map_err(invalid)?;
        let uses_external = filters
            .components()
            .iter()
            .any(|c| matches!(c, FilterComponent::ExternalCoord(_)));
        if uses_external && self.input.as_ref().and_then(|i| i.coordinates.as_ref()).is_none() {
            return Err(invalid(
                "lens uses external coordinates but [input].coordinates is not set",
            ));
        }

        let numeric = filters.numeric_count();
        let resolutions = match self.cover.resolution.len() {
            1 => vec![self.cover.resolution[0]; numeric],
            n if n == numeric => self.cover.resolution.clone(),
            n => {
                return Err(invalid(format!(
                    "{n} resolutions given for {numeric} numeric lens components"
                )))
            }
        };
        let dims = resolutions
            .into_iter()
            .map(|s| IntervalSpec::new(s, self.cover.gain))
            .collect::<Result<Vec<_>, _>>()
            .map_err(invalid)?;
        let cover = CoverSpec::new(dims).map_err(invalid)?;
        self.cluster.validate().map_err(invalid)?;

        if !(0.0..=1.0).contains(&self.rank.alpha) {
            return Err(invalid(format!("alpha must lie in [0, 1], got {}", self.rank.alpha)));
        }
        if self.rank.m_hat.is_empty() {
            return Err(invalid("m_hat list is empty"));
        }
        for &m in self.rank.m_hat.iter().chain([&self.stability.m_hat]) {
            DtmParams::new(m).map_err(invalid)?;
        }
        if self.rank.top == 0 {
            return Err(invalid("rank.top must be positive"));
        }
        if self.stability.sample_size == 0 {
            return Err(invalid("stability.sample_size must be positive"));
        }
        if let EpsilonMode::Value(e) = self.stability.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err(invalid(format!("stability.epsilon must be positive, got {e}")));
            }
        }
        self.stability.baseline.validate().map_err(invalid)?;

        let seeds = Seeds::from_root(self.seed);
        Ok(Plan {
            config: self,
            filters,
            cover,
            seeds,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_synthetic_config_uses_defaults() {
        let plan = RunConfig::from_toml("[synthetic]\n").unwrap().validate().unwrap();
        assert_eq!(plan.config.rank.m_hat, vec![0.05, 0.1, 0.25]);
        assert_eq!(plan.cover.dims().len(), 1);
        assert_eq!(plan.config.stability.epsilon, EpsilonMode::Named(EpsilonName::Median));
    }

    #[test]
    fn lens_components_parse() {
        let cfg = RunConfig::from_toml(
            r#"
            [synthetic]
            [lens]
            components = ["ground_truth_label", "mean_pred_conf", { linear_projection = { axis = 1, dims = 2 } }]
            [cover]
            resolution = [8, 4]
            gain = 0.25
            [cluster]
            method = "dbscan"
            epsilon = 0.5
            min_pts = 3
            [stability]
            epsilon = 0.75
            "#,
        )
        .unwrap();
        let plan = cfg.validate().unwrap();
        assert_eq!(plan.filters.numeric_count(), 2);
        assert_eq!(plan.cover.dims()[1].resolution, 4);
        assert_eq!(plan.config.stability.epsilon, EpsilonMode::Value(0.75));
    }

    #[test]
    fn validation_failures() {
        let bad = [
            "",
            "[synthetic]\n[input]\nrecords = \"r.csv\"\n",
            "[synthetic]\n[cover]\ngain = 1.0\n",
            "[synthetic]\n[cover]\nresolution = [3, 4]\n",
            "[synthetic]\n[rank]\nm_hat = [0.0]\n",
            "[synthetic]\n[rank]\nalpha = 1.5\n",
            "[synthetic]\nkeyword_rate = 1.0\n",
            "[synthetic]\n[lens]\ncomponents = [{ external_coord = 0 }]\n",
            "[input]\nrecords = \"r.txt\"\n",
            "[synthetic]\n[stability]\nepsilon = \"mean\"\n",
            "[synthetic]\nunknown = 1\n",
        ];
        for text in bad {
            let r = RunConfig::from_toml(text).and_then(RunConfig::validate);
            assert!(matches!(r, Err(CliError::Validation(_))), "accepted: {text:?}");
        }
    }

    #[test]
    fn seeds_are_distinct() {
        let s = Seeds::from_root(10);
        let all = [s.corpus, s.training, s.prediction, s.sampling, s.baseline];
        let set: std::collections::BTreeSet<u64> = all.into_iter().collect();
        assert_eq!(set.len(), 5);
    }
}
