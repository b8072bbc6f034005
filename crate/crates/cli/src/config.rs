//! Run configuration file (TOML). Every section is optional and unknown keys
//! are rejected. Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use laha::labelgraph::{SkipGramConfig, WalkConfig};
use laha::metrics::LabelGroupSpec;
use laha::model::{ModelConfig, Variant};
use laha::pipeline::EvalSettings;
use laha::synthetic::SyntheticConfig;
use laha::training::TrainConfig;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub walk: WalkSection,
    #[serde(default)]
    pub skipgram: SkipGramSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub synthetic: SyntheticSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,
    pub label_names: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub label_embedding: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub d: usize,
    pub r: usize,
    pub d_a: usize,
    pub max_len: usize,
    /// Label count; inferred from the training corpus when absent.
    pub k: Option<usize>,
    pub min_freq: usize,
    pub max_vocab: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::new(1);
        ModelSection {
            d: m.d,
            r: m.r,
            d_a: m.d_a,
            max_len: m.max_len,
            k: None,
            min_freq: 1,
            max_vocab: 50_000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub negatives_per_doc: usize,
    pub finetune_word_vectors: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            negatives_per_doc: t.negatives_per_doc,
            finetune_word_vectors: t.finetune_word_vectors,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkSection {
    pub p: f64,
    pub q: f64,
    pub walk_length: usize,
    pub walks_per_node: usize,
}

impl Default for WalkSection {
    fn default() -> Self {
        let w = WalkConfig::default();
        WalkSection {
            p: w.p,
            q: w.q,
            walk_length: w.walk_length,
            walks_per_node: w.walks_per_node,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SkipGramSection {
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for SkipGramSection {
    fn default() -> Self {
        let s = SkipGramConfig::default();
        SkipGramSection {
            window: s.window,
            negatives: s.negatives,
            epochs: s.epochs,
            lr: s.lr,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub taus: Vec<usize>,
    pub group_boundaries: Vec<usize>,
    pub topk: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        let e = EvalSettings::default();
        EvalSection {
            taus: e.taus,
            group_boundaries: e.groups.boundaries,
            topk: 5,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub documents: usize,
    pub labels: usize,
    pub vocab_size: usize,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let s = SyntheticConfig::default();
        SyntheticSection {
            documents: s.documents,
            labels: s.labels,
            vocab_size: s.vocab_size,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    pub topk: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Configuration after overrides and path resolution.
#[derive(Debug, Clone)]
pub struct Settings {
    pub file: RunConfig,
    pub seed: u64,
    pub variant: Variant,
    /// Whether the variant came from the file or a flag rather than the default.
    pub variant_explicit: bool,
    pub topk: usize,
    pub out_dir: PathBuf,
    base: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::malformed(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        if !path.exists() {
            return Err(CliError::missing_input(format!(
                "config file {} does not exist",
                path.display()
            )));
        }
        let text = laha::fsutil::read_to_string(path)?;
        RunConfig::parse(&text).map_err(|e| e.in_file(path))
    }
}

impl Settings {
    pub fn resolve(file: RunConfig, config_path: Option<&Path>, overrides: Overrides) -> Self {
        let base = config_path
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let out_dir = match overrides.out {
            Some(out) => out,
            None => base.join(
                file.paths
                    .out_dir
                    .clone()
                    .unwrap_or_else(|| PathBuf::from("out")),
            ),
        };
        let variant = overrides.variant.or(file.variant);
        Settings {
            seed: overrides.seed.or(file.seed).unwrap_or(0),
            variant: variant.unwrap_or(Variant::Fused),
            variant_explicit: variant.is_some(),
            topk: overrides.topk.unwrap_or(file.eval.topk),
            out_dir,
            base,
            file,
        }
    }

    fn configured(&self, p: &Option<PathBuf>) -> Option<PathBuf> {
        p.as_ref().map(|p| self.base.join(p))
    }

    pub fn train_path(&self) -> Option<PathBuf> {
        self.configured(&self.file.paths.train)
    }

    pub fn test_path(&self) -> Option<PathBuf> {
        self.configured(&self.file.paths.test)
    }

    pub fn word_vectors_path(&self) -> Option<PathBuf> {
        self.configured(&self.file.paths.word_vectors)
    }

    pub fn label_names_path(&self) -> Option<PathBuf> {
        self.configured(&self.file.paths.label_names)
    }

    pub fn graph_path(&self) -> PathBuf {
        self.configured(&self.file.paths.graph)
            .unwrap_or_else(|| self.out_dir.join("label_graph.txt"))
    }

    pub fn graph_summary_path(&self) -> PathBuf {
        self.out_dir.join("graph_summary.json")
    }

    pub fn label_embedding_path(&self) -> PathBuf {
        self.configured(&self.file.paths.label_embedding)
            .unwrap_or_else(|| self.out_dir.join("label_embedding.txt"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.configured(&self.file.paths.checkpoint)
            .unwrap_or_else(|| self.out_dir.join("model.ckpt"))
    }

    pub fn walk_config(&self) -> WalkConfig {
        let w = &self.file.walk;
        WalkConfig {
            p: w.p,
            q: w.q,
            walk_length: w.walk_length,
            walks_per_node: w.walks_per_node,
            seed: self.seed,
        }
    }

    pub fn skipgram_config(&self) -> SkipGramConfig {
        let s = &self.file.skipgram;
        SkipGramConfig {
            r: self.file.model.r,
            window: s.window,
            negatives: s.negatives,
            epochs: s.epochs,
            lr: s.lr,
            seed: self.seed,
        }
    }

    pub fn model_config(&self, k: usize) -> ModelConfig {
        let m = &self.file.model;
        ModelConfig {
            d: m.d,
            r: m.r,
            d_a: m.d_a,
            k,
            max_len: m.max_len,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.file.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            negatives_per_doc: t.negatives_per_doc,
            seed: self.seed,
            finetune_word_vectors: t.finetune_word_vectors,
        }
    }

    pub fn eval_settings(&self) -> CliResult<EvalSettings> {
        let groups = LabelGroupSpec::new(self.file.eval.group_boundaries.clone())?;
        Ok(EvalSettings {
            taus: self.file.eval.taus.clone(),
            groups,
        })
    }

    pub fn synthetic_config(&self) -> SyntheticConfig {
        let s = &self.file.synthetic;
        SyntheticConfig {
            documents: s.documents,
            labels: s.labels,
            vocab_size: s.vocab_size,
            seed: self.seed,
            ..SyntheticConfig::default()
        }
    }
}
