//! Parametric baseline: one global linear layer over the whole sense
//! vocabulary on top of the reference encoder, trained jointly with it by
//! mini-batch NLL. Prediction restricts the softmax to the word's inventory
//! senses.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Instance, SenseId, SenseInventory, WordKey};
use crate::encoder::{ContextEncoder, EncoderConfig, EncoderModel, GradBuffer};
use crate::error::{Error, Result};
use crate::metric::{softmax, SenseDistribution};
use crate::rng;
use crate::trainer::{adamw_update, AdamWConfig, OptimizerState};

use super::{fallback_prediction, Fallback, Prediction};

pub const CLASSIFIER_PROVENANCE: &str = "classifier";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub encoder: EncoderConfig,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 20,
            batch_size: 4,
            optimizer: AdamWConfig::default(),
            encoder: EncoderConfig::default(),
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("classifier epochs and batch_size must be at least 1"));
        }
        self.optimizer.validate()?;
        self.encoder.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub encoder: EncoderModel,
    /// Every inventory sense, sorted; row `i` of `weight` belongs to `senses[i]`.
    pub senses: Vec<SenseId>,
    /// `senses.len() x d`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    /// Words with training data; others get the first-sense fallback.
    pub trained_words: BTreeSet<WordKey>,
}

impl ClassifierModel {
    pub fn init(inventory: &SenseInventory, encoder: EncoderConfig, seed: u64) -> Result<Self> {
        let encoder = EncoderModel::init(encoder)?;
        let mut senses: Vec<SenseId> = inventory.all_senses().cloned().collect();
        senses.sort();
        let d = encoder.dim();
        let mut r = rng::derive(seed, &["classifier-head".into()]);
        let weight = (0..senses.len() * d).map(|_| r.random_range(-0.05..0.05)).collect();
        Ok(ClassifierModel {
            encoder,
            bias: vec![0.0; senses.len()],
            senses,
            weight,
            trained_words: BTreeSet::new(),
        })
    }

    fn row(&self, sense: &SenseId) -> Result<usize> {
        self.senses
            .binary_search(sense)
            .map_err(|_| Error::validation(format!("sense {sense} has no classifier row")))
    }

    /// Rows and logits for the word's inventory senses, in inventory order.
    fn masked_logits(&self, inst: &Instance, f: &[f64], inventory: &SenseInventory) -> Result<(Vec<usize>, Vec<f64>)> {
        let senses = inventory
            .senses(&inst.word)
            .ok_or_else(|| Error::validation(format!("{}: word {} is not in the inventory", inst.id, inst.word)))?;
        let d = f.len();
        let rows = senses.iter().map(|s| self.row(s)).collect::<Result<Vec<_>>>()?;
        let logits = rows
            .iter()
            .map(|&r| self.bias[r] + self.weight[r * d..(r + 1) * d].iter().zip(f).map(|(w, x)| w * x).sum::<f64>())
            .collect();
        Ok((rows, logits))
    }

    pub fn distribution(&self, inst: &Instance, inventory: &SenseInventory) -> Result<SenseDistribution> {
        let f = self.encoder.encode(inst);
        let (rows, logits) = self.masked_logits(inst, &f, inventory)?;
        Ok(SenseDistribution(
            rows.iter().map(|&r| self.senses[r].clone()).zip(softmax(&logits)).collect(),
        ))
    }

    pub fn zero_grads(&self) -> GradBuffer {
        let mut g = self.encoder.zero_grads();
        g.tensors.push(vec![0.0; self.weight.len()]);
        g.tensors.push(vec![0.0; self.bias.len()]);
        g
    }

    /// Encoder tensors followed by the head's weight and bias.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p: Vec<&mut [f64]> = self.encoder.parameters_mut().into_iter().map(|(_, t)| t).collect();
        p.push(&mut self.weight);
        p.push(&mut self.bias);
        p
    }

    /// Mean masked-softmax NLL over `batch`; gradients are added into `grads`.
    pub fn batch_loss(&self, batch: &[&Instance], inventory: &SenseInventory, grads: &mut GradBuffer) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::validation("empty classifier batch"));
        }
        let n = self.encoder.parameters().len();
        if grads.tensors.len() != n + 2 {
            return Err(Error::Shape("classifier gradient buffer has the wrong layout".into()));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        // The encoder only sees its own tensors.
        let mut head = grads.tensors.split_off(n);
        let result = self.accumulate(batch, inventory, grads, &mut head, scale, &mut loss);
        grads.tensors.append(&mut head);
        result.map(|()| loss)
    }

    fn accumulate(
        &self,
        batch: &[&Instance],
        inventory: &SenseInventory,
        grads: &mut GradBuffer,
        head: &mut [Vec<f64>],
        scale: f64,
        loss: &mut f64,
    ) -> Result<()> {
        let d = self.encoder.dim();
        for inst in batch {
            let f = self.encoder.encode(inst);
            let (rows, logits) = self.masked_logits(inst, &f, inventory)?;
            let gold = self.row(inst.gold_sense())?;
            let gi = rows
                .iter()
                .position(|&r| r == gold)
                .ok_or_else(|| Error::validation(format!("{}: gold sense not listed for its word", inst.id)))?;
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            *loss += (lse - logits[gi]) * scale;
            let probs = softmax(&logits);
            let mut df = vec![0.0; d];
            for (k, (&r, p)) in rows.iter().zip(&probs).enumerate() {
                let dz = (p - if k == gi { 1.0 } else { 0.0 }) * scale;
                let w = &self.weight[r * d..(r + 1) * d];
                for i in 0..d {
                    head[0][r * d + i] += dz * f[i];
                    df[i] += dz * w[i];
                }
                head[1][r] += dz;
            }
            self.encoder.backward(inst, &df, grads)?;
        }
        Ok(())
    }
}

/// Trains the baseline; returns the model and the mean batch loss per epoch.
pub fn classifier_baseline_train(train: &Corpus, cfg: &ClassifierConfig) -> Result<(ClassifierModel, Vec<f64>)> {
    cfg.validate()?;
    let encoder = EncoderConfig {
        seed: rng::derive_u64(cfg.seed, &["classifier-encoder".into()]),
        ..cfg.encoder.clone()
    };
    let inventory = train.inventory();
    let mut model = ClassifierModel::init(inventory, encoder, cfg.seed)?;
    model.trained_words = train.tasks().keys().cloned().collect();
    let mut state = OptimizerState::new(&model.zero_grads().shapes());
    let mut grads = model.zero_grads();
    let instances: Vec<&Instance> = train.instances().collect();
    if instances.is_empty() {
        return Err(Error::validation("classifier baseline needs training instances"));
    }
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order = instances.clone();
        order.shuffle(&mut rng::derive(cfg.seed, &["classifier-order".into(), (epoch as u64).into()]));
        let mut total = 0.0;
        let mut batches = 0;
        for batch in order.chunks(cfg.batch_size) {
            total += model.batch_loss(batch, inventory, &mut grads)?;
            batches += 1;
            let mut params = model.parameters_mut();
            adamw_update(&mut params, &mut grads, &mut state, &cfg.optimizer)?;
        }
        let mean = total / batches as f64;
        if !mean.is_finite() {
            return Err(Error::Numeric(format!("classifier loss diverged in epoch {epoch}")));
        }
        losses.push(mean);
    }
    Ok((model, losses))
}

/// Masked argmax over the word's inventory senses, or the first-sense
/// fallback for words without training data.
pub fn classifier_baseline_predict(
    model: &ClassifierModel,
    inst: &Instance,
    inventory: &SenseInventory,
    fallback: Fallback,
) -> Result<Prediction> {
    if !model.trained_words.contains(&inst.word) {
        return fallback_prediction(inst, inventory, fallback);
    }
    let dist = model.distribution(inst, inventory)?;
    Ok(Prediction {
        id: inst.id.clone(),
        sense: dist.argmax().expect("inventory lists are non-empty").clone(),
        provenance: CLASSIFIER_PROVENANCE.into(),
        probs: Some(dist.0),
    })
}
