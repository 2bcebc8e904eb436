//! The TOML run configuration: dataset locations, tokenizer settings,
//! embedding sources, model shape, training hyperparameters, and
//! evaluation settings. Every command reads the same file; unknown keys
//! are rejected so typos fail loudly before any work starts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use qexpert_core::corpus::{DataFormat, Split, TokenizeMode};
use qexpert_core::embed::{DeepWalkConfig, SkipGramConfig};
use qexpert_core::grid::GridAxes;
use qexpert_core::model::ConvSpec;
use qexpert_core::nn::OptimizerKind;
use qexpert_core::train::{ModelKind, TrainConfig};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Where artifacts (vector files, checkpoints, reports) land.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Master seed: embeddings and training derive their streams from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub tokenizer: TokenizerSection,
    #[serde(default)]
    pub embeddings: EmbeddingsSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub synth: SynthSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default)]
    pub format: DataFormatDefault,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test1: Option<PathBuf>,
    pub test2: Option<PathBuf>,
}

/// Wrapper so the format defaults to TSV.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(transparent)]
pub struct DataFormatDefault(pub DataFormat);

impl Default for DataFormatDefault {
    fn default() -> Self {
        Self(DataFormat::Tsv)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerSection {
    #[serde(default = "default_tokenize_mode")]
    pub mode: TokenizeMode,
    #[serde(default = "one")]
    pub min_count: u64,
}

fn default_tokenize_mode() -> TokenizeMode {
    TokenizeMode::Whitespace
}

fn one() -> u64 {
    1
}

impl Default for TokenizerSection {
    fn default() -> Self {
        Self {
            mode: default_tokenize_mode(),
            min_count: 1,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingsSection {
    #[serde(default)]
    pub words: WordEmbSection,
    #[serde(default)]
    pub users: UserEmbSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    /// Train vectors from the configured train split.
    Train,
    /// Load vectors from `path`.
    Load,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordEmbSection {
    #[serde(default = "default_source")]
    pub source: EmbeddingSource,
    /// Vector file: read when `source = "load"`, written by `embed words`.
    pub path: Option<PathBuf>,
    #[serde(default = "default_word_dim")]
    pub dim: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_negatives")]
    pub negatives: usize,
    #[serde(default = "default_embed_epochs")]
    pub epochs: usize,
    #[serde(default = "default_embed_lr")]
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserEmbSection {
    #[serde(default = "default_source")]
    pub source: EmbeddingSource,
    pub path: Option<PathBuf>,
    #[serde(default = "default_user_dim")]
    pub dim: usize,
    #[serde(default = "default_walks_per_vertex")]
    pub walks_per_vertex: usize,
    #[serde(default = "default_walk_length")]
    pub walk_length: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_negatives")]
    pub negatives: usize,
    #[serde(default = "default_embed_epochs")]
    pub epochs: usize,
    #[serde(default = "default_embed_lr")]
    pub learning_rate: f64,
}

fn default_source() -> EmbeddingSource {
    EmbeddingSource::Train
}
fn default_word_dim() -> usize {
    100
}
fn default_user_dim() -> usize {
    200
}
fn default_window() -> usize {
    5
}
fn default_negatives() -> usize {
    5
}
fn default_embed_epochs() -> usize {
    5
}
fn default_embed_lr() -> f64 {
    0.025
}
fn default_walks_per_vertex() -> usize {
    10
}
fn default_walk_length() -> usize {
    40
}

impl Default for WordEmbSection {
    fn default() -> Self {
        toml::from_str("").expect("empty section deserializes")
    }
}

impl Default for UserEmbSection {
    fn default() -> Self {
        toml::from_str("").expect("empty section deserializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvPreset {
    /// 500 filters for each region size 2–5.
    Full,
    /// 100 filters for each region size 2–5 (fast desk runs).
    Desk,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_preset")]
    pub preset: ConvPreset,
    /// Explicit overrides on top of the preset.
    pub region_sizes: Option<Vec<usize>>,
    pub filters_per_size: Option<usize>,
    #[serde(default = "default_seq_len")]
    pub seq_len: usize,
}

fn default_preset() -> ConvPreset {
    ConvPreset::Full
}
fn default_seq_len() -> usize {
    50
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            preset: default_preset(),
            region_sizes: None,
            filters_per_size: None,
            seq_len: default_seq_len(),
        }
    }
}

impl ModelSection {
    pub fn conv_spec(&self) -> ConvSpec {
        let mut spec = match self.preset {
            ConvPreset::Full => ConvSpec::full(),
            ConvPreset::Desk => ConvSpec::desk(),
        };
        if let Some(sizes) = &self.region_sizes {
            spec.region_sizes = sizes.clone();
        }
        if let Some(f) = self.filters_per_size {
            spec.filters_per_size = f;
        }
        spec
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_model_kind")]
    pub model: ModelKind,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_train_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_train_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default)]
    pub fine_tune_users: bool,
    #[serde(default = "default_max_pairs")]
    pub max_pairs_per_question: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_true")]
    pub strict_ids: bool,
}

fn default_model_kind() -> ModelKind {
    ModelKind::QUser
}
fn default_margin() -> f64 {
    0.1
}
fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam
}
fn default_train_lr() -> f64 {
    1e-5
}
fn default_train_epochs() -> usize {
    25
}
fn default_batch_size() -> usize {
    32
}
fn default_dropout() -> f64 {
    0.5
}
fn default_max_pairs() -> usize {
    10
}
fn default_patience() -> usize {
    5
}
fn default_true() -> bool {
    true
}

impl Default for TrainSection {
    fn default() -> Self {
        toml::from_str("").expect("empty section deserializes")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_k")]
    pub k: usize,
    /// Pool-sampling seed; falls back to the master seed when absent.
    pub seed: Option<u64>,
    #[serde(default = "default_split")]
    pub split: Split,
}

fn default_k() -> usize {
    10
}
fn default_split() -> Split {
    Split::Test1
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            k: default_k(),
            seed: None,
            split: default_split(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub models: Vec<ModelKind>,
    pub optimizers: Vec<OptimizerKind>,
    pub learning_rates: Vec<f64>,
    pub region_size_sets: Vec<Vec<usize>>,
}

impl GridSection {
    pub fn axes(&self) -> GridAxes {
        GridAxes {
            models: self.models.clone(),
            optimizers: self.optimizers.clone(),
            learning_rates: self.learning_rates.clone(),
            region_size_sets: self.region_size_sets.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    #[serde(default = "default_topics")]
    pub topics: usize,
    #[serde(default = "default_users")]
    pub users: usize,
    #[serde(default = "default_train_questions")]
    pub train_questions: usize,
    #[serde(default = "default_side_questions")]
    pub dev_questions: usize,
    #[serde(default = "default_side_questions")]
    pub test1_questions: usize,
    #[serde(default = "default_side_questions")]
    pub test2_questions: usize,
    #[serde(default = "default_vocab_size")]
    pub vocab_size: usize,
    #[serde(default = "default_noise_rate")]
    pub noise_rate: f64,
    #[serde(default = "default_question_len")]
    pub question_len: usize,
    #[serde(default = "default_question_len")]
    pub answer_len: usize,
    #[serde(default = "one_usize")]
    pub same_topic_answerers: usize,
    #[serde(default = "one_usize")]
    pub distractor_answerers: usize,
    #[serde(default = "default_true")]
    pub with_answer_text: bool,
}

fn one_usize() -> usize {
    1
}

fn default_topics() -> usize {
    5
}
fn default_users() -> usize {
    50
}
fn default_train_questions() -> usize {
    1000
}
fn default_side_questions() -> usize {
    200
}
fn default_vocab_size() -> usize {
    120
}
fn default_noise_rate() -> f64 {
    0.1
}
fn default_question_len() -> usize {
    12
}

impl Default for SynthSection {
    fn default() -> Self {
        toml::from_str("").expect("empty section deserializes")
    }
}

impl RunConfig {
    /// Parse a TOML file; `seed_override` (the `--seed` flag) replaces the
    /// master seed and the eval seed.
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("invalid config file {}", path.display()))?;
        if let Some(seed) = seed_override {
            config.seed = seed;
            config.eval.seed = Some(seed);
        }
        Ok(config)
    }

    /// A config with every default, for commands run without `--config`.
    pub fn defaults(seed_override: Option<u64>) -> Self {
        let mut config: RunConfig = toml::from_str("").expect("empty config deserializes");
        if let Some(seed) = seed_override {
            config.seed = seed;
            config.eval.seed = Some(seed);
        }
        config
    }

    pub fn eval_seed(&self) -> u64 {
        self.eval.seed.unwrap_or(self.seed)
    }

    /// The per-split dataset paths that are actually configured.
    pub fn split_paths(&self) -> BTreeMap<Split, &PathBuf> {
        let mut map = BTreeMap::new();
        if let Some(p) = &self.data.train {
            map.insert(Split::Train, p);
        }
        if let Some(p) = &self.data.dev {
            map.insert(Split::Dev, p);
        }
        if let Some(p) = &self.data.test1 {
            map.insert(Split::Test1, p);
        }
        if let Some(p) = &self.data.test2 {
            map.insert(Split::Test2, p);
        }
        map
    }

    pub fn path_for(&self, split: Split) -> Result<&PathBuf> {
        let path = match split {
            Split::Train => &self.data.train,
            Split::Dev => &self.data.dev,
            Split::Test1 => &self.data.test1,
            Split::Test2 => &self.data.test2,
        };
        path.as_ref()
            .with_context(|| format!("config has no dataset path for split {split}"))
    }

    /// Fail fast before any command runs: referenced dataset/vector paths
    /// must exist and the output directory must be writable (it is created
    /// here if missing).
    pub fn validate(&self, need_splits: &[Split]) -> Result<()> {
        for split in need_splits {
            let path = self.path_for(*split)?;
            if !path.exists() {
                bail!("dataset file for split {split} does not exist: {}", path.display());
            }
        }
        for (split, path) in self.split_paths() {
            if !path.exists() {
                bail!("dataset file for split {split} does not exist: {}", path.display());
            }
        }
        if self.embeddings.words.source == EmbeddingSource::Load {
            let path = self.words_path();
            if !path.exists() {
                bail!("word vector file does not exist: {}", path.display());
            }
        }
        if self.embeddings.users.source == EmbeddingSource::Load {
            let path = self.users_path();
            if !path.exists() {
                bail!("user vector file does not exist: {}", path.display());
            }
        }
        self.ensure_output_dir()
    }

    /// Create the output directory and confirm it accepts writes.
    pub fn ensure_output_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.output_dir).with_context(|| {
            format!("output directory {} is not writable", self.output_dir.display())
        })?;
        let probe = self.output_dir.join(".write_probe");
        std::fs::write(&probe, b"ok").with_context(|| {
            format!("output directory {} is not writable", self.output_dir.display())
        })?;
        let _ = std::fs::remove_file(&probe);
        Ok(())
    }

    pub fn words_path(&self) -> PathBuf {
        self.embeddings
            .words
            .path
            .clone()
            .unwrap_or_else(|| self.output_dir.join("words.vec"))
    }

    pub fn users_path(&self) -> PathBuf {
        self.embeddings
            .users
            .path
            .clone()
            .unwrap_or_else(|| self.output_dir.join("users.vec"))
    }

    pub fn checkpoint_path(&self, model: ModelKind) -> PathBuf {
        self.output_dir.join(format!("{model}.ckpt"))
    }

    pub fn metrics_path(&self, model: ModelKind) -> PathBuf {
        self.output_dir.join(format!("{model}.metrics.tsv"))
    }

    pub fn best_curve_path(&self, model: ModelKind) -> PathBuf {
        self.output_dir.join(format!("{model}.best.tsv"))
    }

    pub fn eval_report_path(&self, split: Split, model: ModelKind) -> PathBuf {
        self.output_dir.join(format!("eval_{split}_{model}.tsv"))
    }

    pub fn grid_path(&self) -> PathBuf {
        self.output_dir.join("grid.tsv")
    }

    pub fn synth_data_path(&self, split: Split) -> PathBuf {
        self.output_dir.join(format!("{split}.tsv"))
    }

    pub fn synth_experts_path(&self, split: Split) -> PathBuf {
        self.output_dir.join(format!("{split}.experts.tsv"))
    }

    pub fn skipgram_config(&self) -> SkipGramConfig {
        let w = &self.embeddings.words;
        SkipGramConfig {
            dim: w.dim,
            window: w.window,
            negatives: w.negatives,
            epochs: w.epochs,
            learning_rate: w.learning_rate,
        }
    }

    pub fn deepwalk_config(&self) -> DeepWalkConfig {
        let u = &self.embeddings.users;
        DeepWalkConfig {
            dim: u.dim,
            walks_per_vertex: u.walks_per_vertex,
            walk_length: u.walk_length,
            window: u.window,
            negatives: u.negatives,
            epochs: u.epochs,
            learning_rate: u.learning_rate,
        }
    }

    /// Assemble the core training config from the model, train and
    /// tokenizer sections. `model_override` is the `--model` flag.
    pub fn train_config(&self, model_override: Option<ModelKind>) -> TrainConfig {
        let conv = self.model.conv_spec();
        TrainConfig {
            model: model_override.unwrap_or(self.train.model),
            margin: self.train.margin,
            optimizer: self.train.optimizer,
            learning_rate: self.train.learning_rate,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            dropout_rate: self.train.dropout,
            region_sizes: conv.region_sizes,
            filters_per_size: conv.filters_per_size,
            seq_len: self.model.seq_len,
            tokenize_mode: self.tokenizer.mode,
            seed: self.seed,
            fine_tune_users: self.train.fine_tune_users,
            max_pairs_per_question: self.train.max_pairs_per_question,
            patience: self.train.patience,
            strict_ids: self.train.strict_ids,
        }
    }
}
