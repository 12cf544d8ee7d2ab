//! Run configuration (TOML) and the corpus → dataset → trained model pipeline.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, SynthConfig};
use crate::dataset::{build_dataset, Dataset, DatasetConfig};
use crate::encoder::EncoderMode;
use crate::inference::UserFeatureMode;
use crate::model::{CheckpointMeta, ModelConfig, ModelError, RtnetModel, TrainedModel, Variant};
use crate::train::{train, TrainConfig, TrainError, TrainLog};

/// Model hyperparameters; the input widths come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub variant: Variant,
    pub emb_dim: usize,
    pub acoustic_hidden: usize,
    pub linguistic_hidden: usize,
    pub master_hidden: usize,
    pub hz_dim: usize,
    pub reduce_dim: usize,
    pub latent_dim: usize,
    pub inference_hidden: usize,
    pub encoder_mode: EncoderMode,
    pub user_features: UserFeatureMode,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            variant: Variant::Rtnet,
            emb_dim: 16,
            acoustic_hidden: 32,
            linguistic_hidden: 32,
            master_hidden: 64,
            hz_dim: 64,
            reduce_dim: 64,
            latent_dim: 4,
            inference_hidden: 64,
            encoder_mode: EncoderMode::Full,
            user_features: UserFeatureMode::Both,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self, acoustic_dim: usize, vocab_rows: usize) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            acoustic_dim,
            vocab_rows,
            emb_dim: self.emb_dim,
            acoustic_hidden: self.acoustic_hidden,
            linguistic_hidden: self.linguistic_hidden,
            master_hidden: self.master_hidden,
            hz_dim: self.hz_dim,
            reduce_dim: self.reduce_dim,
            latent_dim: self.latent_dim,
            inference_hidden: self.inference_hidden,
            encoder_mode: self.encoder_mode,
            user_features: self.user_features,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    /// Sampling passes over the test set for MAE and histograms.
    pub runs: u32,
    /// Samples per α value for `interpolate`.
    pub samples: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self { runs: 3, samples: 1000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Corpus used by `train`, relative paths resolved against the data
    /// directory.
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub dataset: DatasetConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub evaluate: EvaluateSection,
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            synth: SynthConfig::default(),
            dataset: DatasetConfig::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            evaluate: EvaluateSection::default(),
            paths: PathsSection::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.train;
        if !(t.w_kl >= 0.0 && t.w_kl.is_finite()) {
            return Err(invalid("train.w_kl", "must be a finite value >= 0"));
        }
        if t.batch_size == 0 {
            return Err(invalid("train.batch_size", "must be at least 1"));
        }
        if !(t.adam.learning_rate > 0.0) {
            return Err(invalid("train.adam.learning_rate", "must be positive"));
        }
        if !(t.adam.l2 >= 0.0) {
            return Err(invalid("train.adam.l2", "must be >= 0"));
        }
        if t.log_every == 0 {
            return Err(invalid("train.log_every", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dataset.test_fraction) {
            return Err(invalid("dataset.test_fraction", "must lie in [0, 1)"));
        }
        if self.evaluate.runs == 0 {
            return Err(invalid("evaluate.runs", "must be at least 1"));
        }
        if self.evaluate.samples == 0 {
            return Err(invalid("evaluate.samples", "must be at least 1"));
        }
        self.synth.validate().map_err(|e| {
            let m = e.to_string();
            let field = m.split([':', '[', ' ']).next().unwrap_or("").to_string();
            invalid(&format!("synth.{field}"), m)
        })?;
        // input widths are placeholders here, only the hyperparameters are checked
        self.model
            .model_config(1, crate::features::SPECIALS)
            .validate()
            .map_err(|e| match e {
                ModelError::Config(m) => {
                    let field = m.split_whitespace().next().unwrap_or("").to_string();
                    invalid(&format!("model.{field}"), m)
                }
                other => invalid("model", other.to_string()),
            })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Output of [`train_from_corpus`].
pub struct TrainRun {
    pub model: TrainedModel,
    pub log: TrainLog,
    pub dataset: Dataset,
}

/// Builds the dataset, initializes a model from `run.seed` and trains it.
pub fn train_from_corpus(corpus: &Corpus, run: &RunConfig) -> Result<TrainRun, PipelineError> {
    let dataset = build_dataset(corpus, &run.dataset)?;
    let mc = run.model.model_config(corpus.meta.acoustic_dim, dataset.vocab.rows());
    let mut model = RtnetModel::new(mc.clone(), run.seed)?;
    log::info!(
        "training {:?} on {} pairs ({} parameters)",
        mc.variant,
        dataset.train.len(),
        model.params.len()
    );
    let log = train(&mut model, &dataset.train, &run.train, run.seed)?;
    let meta = CheckpointMeta {
        model: mc,
        dataset: run.dataset.clone(),
        vocab: dataset.vocab.clone(),
        silence_template: corpus.meta.silence_template.clone(),
        seed: run.seed,
        run: run.to_json(),
    };
    Ok(TrainRun {
        model: TrainedModel { model, meta },
        log,
        dataset,
    })
}
