use crate::corpus::{Corpus, Instance, SenseInventory};
use crate::encoder::{EncoderConfig, EncoderModel};
use crate::error::{Error, Result};

use super::{build_support_bank, InferenceConfig, Prediction, Predictor, SupportBank};

pub const KNN_PROVENANCE: &str = "bert-knn-analog";

/// First sense in inventory order.
pub fn s1_baseline(inst: &Instance, inventory: &SenseInventory) -> Result<Prediction> {
    let sense = inventory
        .first_sense(&inst.word)
        .ok_or_else(|| Error::validation(format!("{}: word {} is not in the inventory", inst.id, inst.word)))?;
    Ok(Prediction::plain(inst, sense, "s1"))
}

/// Most frequent training sense of the word; S1 for unseen words.
pub fn mfs_baseline(inst: &Instance, train: &Corpus, inventory: &SenseInventory) -> Result<Prediction> {
    let s1 = s1_baseline(inst, inventory)?;
    match train.task(&inst.word).and_then(|t| t.most_frequent_sense()) {
        Some(sense) => Ok(Prediction::plain(inst, sense, "mfs")),
        None => Ok(Prediction {
            provenance: "s1-fallback".into(),
            ..s1
        }),
    }
}

/// A bank built with the untrained encoder: nearest-prototype prediction
/// over frozen initial representations.
pub fn knn_baseline_bank(
    train: &Corpus,
    encoder: &EncoderConfig,
    cfg: &InferenceConfig,
) -> Result<(EncoderModel, SupportBank)> {
    let model = EncoderModel::init(encoder.clone())?;
    let bank = build_support_bank(train, &model, cfg, "init")?;
    Ok((model, bank))
}

impl<'a> Predictor<'a, EncoderModel> {
    pub fn knn(bank: &SupportBank, frozen: &'a EncoderModel, inventory: &'a SenseInventory, cfg: &InferenceConfig) -> Result<Self> {
        Ok(Predictor::new(bank, frozen, inventory, cfg)?.with_provenance(KNN_PROVENANCE))
    }
}
