//! Episodic training loop.
//!
//! Each epoch builds one episode per eligible word, sums episode gradients
//! and steps the optimizer every `accumulate_episodes` episodes (plus once at
//! the end of the epoch for any remainder). With a dev set the best model by
//! dev F1 is kept alongside the current one.

mod checkpoint;
mod optim;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use checkpoint::{digest as checkpoint_digest, load_checkpoint, save_checkpoint, BestModel, Checkpoint, FORMAT_VERSION};
pub use optim::{adamw_update, optimizer_step, AdamWConfig, OptimizerState};

use crate::corpus::{Corpus, GoldInstance};
use crate::encoder::{ContextEncoder, EncoderConfig, EncoderModel};
use crate::error::{Error, Result};
use crate::inference::{self, InferenceConfig};
use crate::metric::{episode_loss_with, LossOptions, ScoreFn};
use crate::rng;
use crate::sampler::{build_epoch, SamplingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub accumulate_episodes: usize,
    pub optimizer: AdamWConfig,
    pub sampling: SamplingConfig,
    pub encoder: EncoderConfig,
    pub score_fn: ScoreFn,
    /// Score with prototype and gloss distances (needs `encoder.gloss_encoder`).
    pub use_glosses: bool,
    /// Drives episode sampling and parameter initialisation; the seeds inside
    /// `sampling` and `encoder` are replaced by streams derived from it.
    pub seed: u64,
    /// Evaluate on the dev set every this many epochs (0 = only at the end).
    pub dev_eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            accumulate_episodes: 5,
            optimizer: AdamWConfig::default(),
            sampling: SamplingConfig::default(),
            encoder: EncoderConfig::default(),
            score_fn: ScoreFn::Dot,
            use_glosses: false,
            seed: 0,
            dev_eval_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.accumulate_episodes == 0 {
            return Err(Error::config("accumulate_episodes must be at least 1"));
        }
        if self.use_glosses && !self.encoder.gloss_encoder {
            return Err(Error::config("use_glosses requires gloss_encoder = true"));
        }
        self.optimizer.validate()?;
        self.sampling.validate()?;
        self.encoder.validate()
    }

    pub fn sampling_config(&self) -> SamplingConfig {
        SamplingConfig {
            seed: rng::derive_u64(self.seed, &["sampling".into()]),
            ..self.sampling.clone()
        }
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            seed: rng::derive_u64(self.seed, &["encoder-init".into()]),
            ..self.encoder.clone()
        }
    }
}

/// Dev data and the inference settings used to score it.
#[derive(Debug, Clone, Copy)]
pub struct DevSet<'a> {
    pub gold: &'a [GoldInstance],
    pub inference: &'a InferenceConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean episode loss per epoch.
    pub epoch_loss: Vec<f64>,
    /// Queries dropped per epoch because their sense had no support.
    pub dropped_queries: Vec<usize>,
    /// Episodes per epoch that had no retained query and were skipped.
    pub skipped_episodes: Vec<usize>,
    /// `(epoch, F1)`, epochs counted from 1.
    pub dev_f1: Vec<(usize, f64)>,
    pub best_epoch: Option<usize>,
    pub optimizer_steps: u64,
    /// Not persisted, so that checkpoints depend only on their inputs.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl TrainLog {
    pub fn epochs_run(&self) -> usize {
        self.epoch_loss.len()
    }
}

/// Resumable training state.
pub struct Trainer<'a> {
    corpus: &'a Corpus,
    cfg: TrainConfig,
    pub model: EncoderModel,
    pub optimizer: OptimizerState,
    pub log: TrainLog,
    pub best: Option<BestModel>,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Trainer<'a> {
    pub fn new(corpus: &'a Corpus, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = EncoderModel::init(cfg.encoder_config())?;
        let optimizer = OptimizerState::for_model(&model);
        Ok(Trainer {
            corpus,
            cfg,
            model,
            optimizer,
            log: TrainLog::default(),
            best: None,
            pool: None,
        })
    }

    /// Continues from a checkpoint; the run then matches one that was never
    /// interrupted.
    pub fn resume(corpus: &'a Corpus, ckpt: Checkpoint) -> Result<Self> {
        ckpt.config.validate()?;
        ckpt.model.validate()?;
        if ckpt.optimizer.shapes() != ckpt.model.zero_grads().shapes() {
            return Err(Error::Shape("optimizer state does not match the model".into()));
        }
        if ckpt.next_epoch as usize != ckpt.log.epochs_run() {
            return Err(Error::validation("checkpoint log and epoch counter disagree"));
        }
        Ok(Trainer {
            corpus,
            cfg: ckpt.config,
            model: ckpt.model,
            optimizer: ckpt.optimizer,
            log: ckpt.log,
            best: ckpt.best,
            pool: None,
        })
    }

    /// Encode episode inputs on `threads` workers. Results are bit-identical
    /// to the serial path.
    pub fn with_threads(mut self, threads: usize) -> Result<Self> {
        self.pool = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::config(format!("cannot start thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(self)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn next_epoch(&self) -> usize {
        self.log.epochs_run()
    }

    pub fn is_done(&self) -> bool {
        self.next_epoch() >= self.cfg.epochs
    }

    pub fn run_epoch(&mut self, dev: Option<DevSet<'_>>) -> Result<()> {
        let start = Instant::now();
        let epoch = self.next_epoch();
        let plan = build_epoch(self.corpus, &self.cfg.sampling_config(), epoch as u64)?;
        let opts = LossOptions {
            score_fn: self.cfg.score_fn,
            glosses: self.cfg.use_glosses.then(|| self.corpus.inventory()),
            pool: self.pool.as_ref(),
        };

        let mut grads = self.model.zero_grads();
        let mut pending = 0;
        let mut loss_sum = 0.0;
        let mut counted = 0usize;
        let mut dropped = 0;
        let mut skipped = 0;
        for ep in &plan.episodes {
            if ep.retained_queries().is_empty() {
                skipped += 1;
                dropped += ep.query.len();
                continue;
            }
            let out = episode_loss_with(ep, &self.model, &opts)?;
            loss_sum += out.loss;
            counted += 1;
            dropped += out.dropped_queries;
            grads.add_assign(&out.grads)?;
            pending += 1;
            if pending == self.cfg.accumulate_episodes {
                optimizer_step(&mut self.model, &mut grads, &mut self.optimizer, &self.cfg.optimizer)?;
                self.log.optimizer_steps += 1;
                pending = 0;
            }
        }
        if pending > 0 {
            optimizer_step(&mut self.model, &mut grads, &mut self.optimizer, &self.cfg.optimizer)?;
            self.log.optimizer_steps += 1;
        }
        if counted == 0 {
            return Err(Error::Sampling(format!("epoch {epoch}: every episode lacked a retained query")));
        }
        let mean_loss = loss_sum / counted as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite mean loss in epoch {epoch}")));
        }
        self.log.epoch_loss.push(mean_loss);
        self.log.dropped_queries.push(dropped);
        self.log.skipped_episodes.push(skipped);
        log::info!("epoch {} loss {mean_loss:.5} dropped {dropped}", epoch + 1);

        let done = epoch + 1;
        if let Some(dev) = dev {
            let due = self.cfg.dev_eval_every > 0 && done % self.cfg.dev_eval_every == 0;
            if due || done == self.cfg.epochs {
                self.evaluate_dev(done, dev)?;
            }
        }
        self.log.wall_time_secs += start.elapsed().as_secs_f64();
        Ok(())
    }

    fn evaluate_dev(&mut self, epoch: usize, dev: DevSet<'_>) -> Result<()> {
        let f1 = inference::dev_f1(self.corpus, &self.model, dev.gold, dev.inference)?;
        log::info!("epoch {epoch} dev F1 {f1:.4}");
        self.log.dev_f1.push((epoch, f1));
        if self.best.as_ref().is_none_or(|b| f1 > b.dev_f1) {
            self.best = Some(BestModel {
                epoch,
                dev_f1: f1,
                model: self.model.clone(),
            });
            self.log.best_epoch = Some(epoch);
        }
        Ok(())
    }

    /// Runs until `epochs` epochs have completed or `stop_after` more have run.
    pub fn run(&mut self, dev: Option<DevSet<'_>>, stop_after: Option<usize>) -> Result<()> {
        let mut ran = 0;
        while !self.is_done() && stop_after.is_none_or(|n| ran < n) {
            self.run_epoch(dev)?;
            ran += 1;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: FORMAT_VERSION,
            config: self.cfg.clone(),
            model: self.model.clone(),
            optimizer: self.optimizer.clone(),
            next_epoch: self.next_epoch() as u64,
            log: self.log.clone(),
            best: self.best.clone(),
        }
    }

    /// The best-dev model when a dev set was used, else the current one.
    pub fn finish(self) -> (EncoderModel, TrainLog) {
        let model = match self.best {
            Some(b) => b.model,
            None => self.model,
        };
        (model, self.log)
    }
}

pub fn train(corpus: &Corpus, cfg: &TrainConfig, dev: Option<DevSet<'_>>) -> Result<(EncoderModel, TrainLog)> {
    let mut trainer = Trainer::new(corpus, cfg.clone())?;
    trainer.run(dev, None)?;
    Ok(trainer.finish())
}
