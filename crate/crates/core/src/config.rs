//! Run configuration: one flat TOML file covering sampling, training,
//! inference, the classifier baseline and evaluation.
//!
//! ```toml
//! seed = 13
//! K = 40                 # max_support
//! r = 0.4                # split_ratio
//! strategy = "balanced"
//! epochs = 100
//! learning_rate = 1e-3
//! I_S = 30               # max_support_per_sense
//! buckets = [0, 1, 11, 51]
//! ```
//!
//! Unknown keys are rejected. Values given in the file take precedence over
//! the equivalent command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::eval::Buckets;
use crate::inference::{ClassifierConfig, Fallback, InferenceConfig};
use crate::metric::ScoreFn;
use crate::rng;
use crate::sampler::{SamplingConfig, Strategy};
use crate::trainer::{AdamWConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,

    #[serde(alias = "K")]
    pub max_support: usize,
    #[serde(alias = "r")]
    pub split_ratio: f64,
    pub strategy: Strategy,

    pub epochs: usize,
    pub accumulate_episodes: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub score_fn: ScoreFn,
    pub use_glosses: bool,
    pub dev_eval_every: usize,

    pub embedding_dim: usize,
    pub hash_buckets: usize,
    pub context_window: usize,

    #[serde(alias = "I_S")]
    pub max_support_per_sense: usize,
    pub fallback: Fallback,

    pub classifier_epochs: usize,
    pub classifier_batch_size: usize,
    pub classifier_learning_rate: f64,

    pub buckets: Buckets,
    pub freq_threshold: Option<usize>,

    pub corpus: Option<PathBuf>,
    pub inventory: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub gold: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let inf = InferenceConfig::default();
        let cls = ClassifierConfig::default();
        RunConfig {
            seed: None,
            max_support: train.sampling.max_support,
            split_ratio: train.sampling.split_ratio,
            strategy: train.sampling.strategy,
            epochs: train.epochs,
            accumulate_episodes: train.accumulate_episodes,
            learning_rate: train.optimizer.learning_rate,
            weight_decay: train.optimizer.weight_decay,
            beta1: train.optimizer.beta1,
            beta2: train.optimizer.beta2,
            eps: train.optimizer.eps,
            score_fn: train.score_fn,
            use_glosses: train.use_glosses,
            dev_eval_every: train.dev_eval_every,
            embedding_dim: train.encoder.embedding_dim,
            hash_buckets: train.encoder.hash_buckets,
            context_window: train.encoder.context_window,
            max_support_per_sense: inf.max_support_per_sense,
            fallback: inf.fallback,
            classifier_epochs: cls.epochs,
            classifier_batch_size: cls.batch_size,
            classifier_learning_rate: cls.optimizer.learning_rate,
            buckets: Buckets::default(),
            freq_threshold: None,
            corpus: None,
            inventory: None,
            dev: None,
            gold: None,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    /// Defaults when no file is given.
    pub fn load_optional(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config(0).validate()?;
        self.inference_config(0).validate()?;
        self.classifier_config(0).validate()
    }

    /// The file's seed if it sets one, else the flag's.
    pub fn resolve_seed(&self, flag: Option<u64>) -> Result<u64> {
        self.seed
            .or(flag)
            .ok_or_else(|| Error::config("a seed is required (--seed or `seed` in the config file)"))
    }

    /// A path from the file, else from the flag.
    pub fn resolve_path(&self, from_file: &Option<PathBuf>, flag: Option<PathBuf>, name: &str) -> Result<PathBuf> {
        from_file
            .clone()
            .or(flag)
            .ok_or_else(|| Error::config(format!("missing --{name}")))
    }

    fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            embedding_dim: self.embedding_dim,
            hash_buckets: self.hash_buckets,
            context_window: self.context_window,
            seed: 0,
            gloss_encoder: self.use_glosses,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            accumulate_episodes: self.accumulate_episodes,
            optimizer: AdamWConfig {
                learning_rate: self.learning_rate,
                weight_decay: self.weight_decay,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
            },
            sampling: SamplingConfig {
                max_support: self.max_support,
                split_ratio: self.split_ratio,
                strategy: self.strategy,
                seed: 0,
            },
            encoder: self.encoder(),
            score_fn: self.score_fn,
            use_glosses: self.use_glosses,
            seed,
            dev_eval_every: self.dev_eval_every,
        }
    }

    pub fn inference_config(&self, seed: u64) -> InferenceConfig {
        InferenceConfig {
            max_support_per_sense: self.max_support_per_sense,
            seed: rng::derive_u64(seed, &["support-bank".into()]),
            score_fn: self.score_fn,
            fallback: self.fallback,
            use_glosses: self.use_glosses,
        }
    }

    pub fn classifier_config(&self, seed: u64) -> ClassifierConfig {
        ClassifierConfig {
            epochs: self.classifier_epochs,
            batch_size: self.classifier_batch_size,
            optimizer: AdamWConfig {
                learning_rate: self.classifier_learning_rate,
                weight_decay: self.weight_decay,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
            },
            encoder: EncoderConfig {
                gloss_encoder: false,
                ..self.encoder()
            },
            seed,
        }
    }

    /// Encoder for the frozen nearest-prototype baseline.
    pub fn knn_encoder(&self, seed: u64) -> EncoderConfig {
        EncoderConfig {
            seed: rng::derive_u64(seed, &["knn-encoder".into()]),
            gloss_encoder: false,
            ..self.encoder()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        let t = RunConfig::default().train_config(3);
        assert_eq!(t.epochs, 100);
        assert_eq!(t.accumulate_episodes, 5);
        assert_eq!(t.sampling.max_support, 40);
        assert_eq!(t.sampling.split_ratio, 0.4);
        assert_eq!(RunConfig::default().inference_config(3).max_support_per_sense, 30);
    }

    #[test]
    fn short_names_are_accepted() {
        let cfg = RunConfig::parse("K = 10\nr = 0.5\nI_S = 7\nstrategy = \"P_u\"\nscore_fn = \"neg_sq_l2\"").unwrap();
        assert_eq!(cfg.max_support, 10);
        assert_eq!(cfg.split_ratio, 0.5);
        assert_eq!(cfg.max_support_per_sense, 7);
        assert_eq!(cfg.strategy, Strategy::Uniform);
        assert_eq!(cfg.score_fn, ScoreFn::NegSqL2);
    }

    #[test]
    fn bad_input_is_a_config_error() {
        for text in [
            "nonsense = 1",
            "epochs = 0",
            "r = 1.5",
            "K = 0",
            "learning_rate = -1.0",
            "I_S = 0",
            "buckets = [1, 2]",
            "score_fn = \"cosine\"",
            "epochs = ",
        ] {
            let err = RunConfig::parse(text).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{text}: {err}");
        }
    }

    #[test]
    fn file_seed_wins_over_flag() {
        let cfg = RunConfig::parse("seed = 5").unwrap();
        assert_eq!(cfg.resolve_seed(Some(9)).unwrap(), 5);
        assert_eq!(RunConfig::default().resolve_seed(Some(9)).unwrap(), 9);
        assert!(RunConfig::default().resolve_seed(None).is_err());
    }
}
