//! TOML run configuration. Every hyperparameter has a default here; only the
//! seed and the input paths a command needs are mandatory.

use std::path::{Path, PathBuf};

use hyvae_core::features::{FeatureSet, GENOME_TOP_K};
use hyvae_core::hvae::AssemblyMode;
use hyvae_core::metrics::{MetricSpec, Scheme, DEFAULT_METRICS};
use hyvae_core::mvae::DEFAULT_EMBEDDING_DIM;
use hyvae_core::optim::AdamConfig;
use hyvae_core::vae::TrainConfig;
use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every random substream. Required, either here or via `--seed`.
    pub seed: Option<u64>,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub svae: ModelShape,
    #[serde(default = "mvae_shape")]
    pub mvae: ModelShape,
    #[serde(default)]
    pub hvae: HybridSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub viz: VizSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub ratings: Option<PathBuf>,
    pub movies: Option<PathBuf>,
    pub genome_scores: Option<PathBuf>,
    pub genome_tags: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub liwc: Option<PathBuf>,
    pub vad: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Ratings strictly above this become clicks.
    pub threshold: f64,
    pub folds: usize,
    /// 0 scales the 10,000-of-138,493 proportion to the roster size.
    pub val_size: usize,
    pub test_size: usize,
    pub holdout_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            threshold: hyvae_core::dataset::DEFAULT_THRESHOLD,
            folds: 3,
            val_size: 0,
            test_size: 0,
            holdout_fraction: hyvae_core::dataset::DEFAULT_HOLDOUT_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub set: String,
    pub genome_top_k: usize,
    pub embedding_dim: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            set: FeatureSet::Genre.name().to_string(),
            genome_top_k: GENOME_TOP_K,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta_max: f64,
    pub anneal_fraction: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            beta_max: t.beta_max,
            anneal_fraction: t.anneal_fraction,
            adam_beta1: t.adam.beta1,
            adam_beta2: t.adam.beta2,
            adam_epsilon: t.adam.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelShape {
    pub hidden: Vec<usize>,
    pub latent: usize,
    /// Overrides `[train] epochs` for this model.
    pub epochs: Option<usize>,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self {
            hidden: vec![600],
            latent: 200,
            epochs: None,
        }
    }
}

fn mvae_shape() -> ModelShape {
    ModelShape {
        latent: DEFAULT_EMBEDDING_DIM,
        ..ModelShape::default()
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridSection {
    pub hidden: Vec<usize>,
    pub latent: usize,
    pub epochs: Option<usize>,
    pub mode: String,
    pub freeze_embeddings: bool,
}

impl Default for HybridSection {
    fn default() -> Self {
        let s = ModelShape::default();
        Self {
            hidden: s.hidden,
            latent: s.latent,
            epochs: None,
            mode: AssemblyMode::Flatten.name().to_string(),
            freeze_embeddings: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub schemes: Vec<String>,
    /// `ndcg@R` or `recall@R`.
    pub metrics: Vec<String>,
    pub per_user: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            schemes: vec![Scheme::Eval1.name().into(), Scheme::Eval2.name().into()],
            metrics: DEFAULT_METRICS
                .iter()
                .map(|m| format!("{}@{}", m.name().to_lowercase(), m.cutoff))
                .collect(),
            per_user: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VizSection {
    /// `tsne` or `pca`.
    pub projection: String,
    pub perplexity: f64,
    pub tsne_iterations: usize,
    pub user_clusters: usize,
    pub movie_clusters: usize,
    pub max_kmeans_iterations: usize,
}

impl Default for VizSection {
    fn default() -> Self {
        Self {
            projection: "tsne".into(),
            perplexity: 30.0,
            tsne_iterations: 1000,
            user_clusters: 10,
            movie_clusters: 18,
            max_kmeans_iterations: hyvae_core::viz::DEFAULT_MAX_ITER,
        }
    }
}

/// Input files a command reads; validated before it writes anything.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Input {
    Ratings,
    Movies,
    GenomeScores,
    GenomeTags,
    Metadata,
    Liwc,
    Vad,
    WordVectors,
}

impl Input {
    fn key(self) -> &'static str {
        match self {
            Input::Ratings => "ratings",
            Input::Movies => "movies",
            Input::GenomeScores => "genome_scores",
            Input::GenomeTags => "genome_tags",
            Input::Metadata => "metadata",
            Input::Liwc => "liwc",
            Input::Vad => "vad",
            Input::WordVectors => "word_vectors",
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        for p in [
            &mut paths.ratings,
            &mut paths.movies,
            &mut paths.genome_scores,
            &mut paths.genome_tags,
            &mut paths.metadata,
            &mut paths.liwc,
            &mut paths.vad,
            &mut paths.word_vectors,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut paths.out);
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| CliError::Config("no seed given; set `seed` in the config or pass --seed".into()))
    }

    pub fn input(&self, which: Input) -> Result<&Path> {
        let p = &self.paths;
        let path = match which {
            Input::Ratings => &p.ratings,
            Input::Movies => &p.movies,
            Input::GenomeScores => &p.genome_scores,
            Input::GenomeTags => &p.genome_tags,
            Input::Metadata => &p.metadata,
            Input::Liwc => &p.liwc,
            Input::Vad => &p.vad,
            Input::WordVectors => &p.word_vectors,
        };
        let path = path
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("[paths] {} is not set", which.key())))?;
        if !path.is_file() {
            return Err(CliError::Config(format!("[paths] {} = {} does not exist", which.key(), path.display())));
        }
        Ok(path)
    }

    pub fn require(&self, inputs: &[Input]) -> Result<()> {
        inputs.iter().try_for_each(|&i| self.input(i).map(|_| ()))
    }

    pub fn feature_set(&self) -> Result<FeatureSet> {
        FeatureSet::from_name(&self.features.set)
            .ok_or_else(|| CliError::Config(format!("unknown feature set {:?}", self.features.set)))
    }

    pub fn assembly_mode(&self) -> Result<AssemblyMode> {
        AssemblyMode::from_name(&self.hvae.mode)
            .ok_or_else(|| CliError::Config(format!("unknown assembly mode {:?}", self.hvae.mode)))
    }

    pub fn schemes(&self) -> Result<Vec<Scheme>> {
        self.eval
            .schemes
            .iter()
            .map(|s| match s.as_str() {
                "eval1" => Ok(Scheme::Eval1),
                "eval2" => Ok(Scheme::Eval2),
                other => Err(CliError::Config(format!("unknown scheme {other:?}"))),
            })
            .collect()
    }

    pub fn metrics(&self) -> Result<Vec<MetricSpec>> {
        self.eval.metrics.iter().map(|m| parse_metric(m)).collect()
    }

    /// Training settings for a model, with its optional epoch override.
    pub fn train_config(&self, epochs: Option<usize>) -> Result<TrainConfig> {
        let t = &self.train;
        let cfg = TrainConfig {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: epochs.unwrap_or(t.epochs),
            beta_max: t.beta_max,
            anneal_fraction: t.anneal_fraction,
            seed: self.seed()?,
            adam: AdamConfig {
                beta1: t.adam_beta1,
                beta2: t.adam_beta2,
                epsilon: t.adam_epsilon,
            },
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Checks every enumerated option so typos fail before any work.
    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        self.feature_set()?;
        self.assembly_mode()?;
        self.schemes()?;
        self.metrics()?;
        self.train_config(None)?;
        if !matches!(self.viz.projection.as_str(), "tsne" | "pca") {
            return Err(CliError::Config(format!("unknown projection {:?}", self.viz.projection)));
        }
        if self.data.folds == 0 {
            return Err(CliError::Config("data.folds must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn parse_metric(text: &str) -> Result<MetricSpec> {
    let bad = || CliError::Config(format!("metric {text:?} is not of the form ndcg@R or recall@R"));
    let (kind, cutoff) = text.split_once('@').ok_or_else(bad)?;
    let cutoff: usize = cutoff.parse().map_err(|_| bad())?;
    if cutoff == 0 {
        return Err(bad());
    }
    match kind.to_ascii_lowercase().as_str() {
        "ndcg" => Ok(MetricSpec::ndcg(cutoff)),
        "recall" => Ok(MetricSpec::recall(cutoff)),
        _ => Err(bad()),
    }
}
