//! Prediction with a trained encoder, plus baselines.
//!
//! For every training word a support bank holds up to `I_S` encoded examples
//! per sense. A test instance is scored against the per-sense means of its
//! word's bank entries. Words never seen in training fall back to the first
//! inventory sense.

mod baselines;
mod classifier;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

pub use baselines::{knn_baseline_bank, mfs_baseline, s1_baseline, KNN_PROVENANCE};
pub use classifier::{
    classifier_baseline_predict, classifier_baseline_train, ClassifierConfig, ClassifierModel,
    CLASSIFIER_PROVENANCE,
};

use crate::corpus::{Corpus, GoldInstance, Instance, SenseId, SenseInventory, WordKey};
use crate::encoder::{ContextEncoder, ContextVector, EncoderModel};
use crate::error::{Error, Result};
use crate::metric::{class_probabilities, gloss_class_probabilities, Prototype, ScoreFn, SenseDistribution};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Fallback {
    #[default]
    #[serde(rename = "s1")]
    S1,
    #[serde(rename = "mfs")]
    Mfs,
}

impl std::str::FromStr for Fallback {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s1" => Ok(Fallback::S1),
            "mfs" => Ok(Fallback::Mfs),
            other => Err(Error::config(format!("unknown fallback {other:?} (expected s1 or mfs)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceConfig {
    /// Supports kept per sense (`I_S`).
    pub max_support_per_sense: usize,
    pub seed: u64,
    pub score_fn: ScoreFn,
    pub fallback: Fallback,
    /// Add the gloss distance to the prototype distance when scoring.
    pub use_glosses: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            max_support_per_sense: 30,
            seed: 0,
            score_fn: ScoreFn::Dot,
            fallback: Fallback::S1,
            use_glosses: false,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_support_per_sense == 0 {
            return Err(Error::config("I_S must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankEntry {
    pub id: String,
    pub vector: Vec<f64>,
}

/// Encoded training supports per word and sense.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportBank {
    /// Digest of the checkpoint whose encoder produced the vectors.
    pub checkpoint_digest: String,
    pub max_support_per_sense: usize,
    pub seed: u64,
    pub words: BTreeMap<WordKey, BTreeMap<SenseId, Vec<BankEntry>>>,
}

impl SupportBank {
    pub fn senses(&self, word: &WordKey) -> Option<&BTreeMap<SenseId, Vec<BankEntry>>> {
        self.words.get(word)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = serde_json::to_vec(self).expect("bank serializes");
        bytes.push(b'\n');
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::validation(format!("{}: corrupt support bank: {e}", path.display())))
    }
}

/// Samples `min(I_S, |A_j(w)|)` training instances per sense, uniformly
/// without replacement, for every training word, and encodes them once.
pub fn build_support_bank<E: ContextEncoder>(
    corpus: &Corpus,
    model: &E,
    cfg: &InferenceConfig,
    checkpoint_digest: &str,
) -> Result<SupportBank> {
    cfg.validate()?;
    let mut words = BTreeMap::new();
    for (word, task) in corpus.tasks() {
        let mut by_sense: BTreeMap<&SenseId, Vec<&Instance>> = BTreeMap::new();
        for inst in &task.instances {
            by_sense.entry(inst.gold_sense()).or_default().push(inst);
        }
        let mut senses = BTreeMap::new();
        for (sense, members) in by_sense {
            let k = cfg.max_support_per_sense.min(members.len());
            let key = word.to_string();
            let mut rng = rng::derive(cfg.seed, &["bank".into(), key.as_str().into(), sense.as_str().into()]);
            let mut picked = index::sample(&mut rng, members.len(), k).into_vec();
            picked.sort_unstable();
            let entries = picked
                .into_iter()
                .map(|i| BankEntry {
                    id: members[i].id.clone(),
                    vector: model.encode(members[i]).0,
                })
                .collect();
            senses.insert(sense.clone(), entries);
        }
        words.insert(word.clone(), senses);
    }
    Ok(SupportBank {
        checkpoint_digest: checkpoint_digest.to_string(),
        max_support_per_sense: cfg.max_support_per_sense,
        seed: cfg.seed,
        words,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub sense: SenseId,
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<BTreeMap<SenseId, f64>>,
}

impl Prediction {
    fn plain(inst: &Instance, sense: &SenseId, provenance: &str) -> Self {
        Prediction {
            id: inst.id.clone(),
            sense: sense.clone(),
            provenance: provenance.to_string(),
            probs: None,
        }
    }
}

pub const METRIC_PROVENANCE: &str = "metric";

/// The fallback prediction for a word absent from training.
pub fn fallback_prediction(inst: &Instance, inventory: &SenseInventory, fallback: Fallback) -> Result<Prediction> {
    let first = inventory
        .first_sense(&inst.word)
        .ok_or_else(|| Error::validation(format!("{}: word {} is not in the inventory", inst.id, inst.word)))?;
    let label = match fallback {
        Fallback::S1 => "s1-fallback",
        Fallback::Mfs => "mfs-fallback",
    };
    Ok(Prediction::plain(inst, first, label))
}

/// Bank prototypes (and projected glosses) per word, ready for scoring.
pub struct Predictor<'a, E> {
    model: &'a E,
    inventory: &'a SenseInventory,
    cfg: InferenceConfig,
    prototypes: BTreeMap<WordKey, Vec<Prototype>>,
    glosses: BTreeMap<WordKey, Vec<Option<ContextVector>>>,
    provenance: String,
}

impl<'a, E: ContextEncoder> Predictor<'a, E> {
    pub fn new(bank: &SupportBank, model: &'a E, inventory: &'a SenseInventory, cfg: &InferenceConfig) -> Result<Self> {
        cfg.validate()?;
        let mut prototypes = BTreeMap::new();
        let mut glosses = BTreeMap::new();
        for (word, senses) in &bank.words {
            let mut protos = Vec::new();
            for (sense, entries) in senses {
                if !inventory.contains(word, sense) {
                    return Err(Error::validation(format!("bank sense {sense} is not listed for {word}")));
                }
                let support: Vec<(&[f64], &SenseId)> = entries.iter().map(|e| (e.vector.as_slice(), sense)).collect();
                if support.is_empty() {
                    continue;
                }
                protos.extend(crate::metric::compute_prototypes(&support)?);
            }
            if cfg.use_glosses {
                let g = protos
                    .iter()
                    .map(|p| inventory.gloss(&p.sense).map(|g| model.encode_gloss(g)).transpose())
                    .collect::<Result<Vec<_>>>()?;
                glosses.insert(word.clone(), g);
            }
            if !protos.is_empty() {
                prototypes.insert(word.clone(), protos);
            }
        }
        Ok(Predictor {
            model,
            inventory,
            cfg: cfg.clone(),
            prototypes,
            glosses,
            provenance: METRIC_PROVENANCE.to_string(),
        })
    }

    /// Label predictions from the bank with `name` instead of "metric".
    pub fn with_provenance(mut self, name: &str) -> Self {
        self.provenance = name.to_string();
        self
    }

    pub fn distribution(&self, inst: &Instance) -> Result<Option<SenseDistribution>> {
        let Some(protos) = self.prototypes.get(&inst.word) else {
            return Ok(None);
        };
        let q = self.model.encode(inst);
        let dist = if self.cfg.use_glosses {
            gloss_class_probabilities(protos, &self.glosses[&inst.word], &q)?
        } else {
            class_probabilities(protos, &q, self.cfg.score_fn)?
        };
        Ok(Some(dist))
    }

    pub fn predict(&self, inst: &Instance) -> Result<Prediction> {
        if self.inventory.senses(&inst.word).is_none() {
            return Err(Error::validation(format!(
                "{}: word {} is not in the inventory",
                inst.id, inst.word
            )));
        }
        match self.distribution(inst)? {
            None => fallback_prediction(inst, self.inventory, self.cfg.fallback),
            Some(dist) => {
                let sense = dist.argmax().expect("non-empty distribution").clone();
                Ok(Prediction {
                    id: inst.id.clone(),
                    sense,
                    provenance: self.provenance.clone(),
                    probs: Some(dist.0),
                })
            }
        }
    }

    pub fn predict_all<'i>(&self, instances: impl IntoIterator<Item = &'i Instance>) -> Result<Vec<Prediction>> {
        instances.into_iter().map(|i| self.predict(i)).collect()
    }
}

/// Single-instance convenience over [`Predictor`].
pub fn predict<E: ContextEncoder>(
    inst: &Instance,
    bank: &SupportBank,
    model: &E,
    inventory: &SenseInventory,
    cfg: &InferenceConfig,
) -> Result<Prediction> {
    Predictor::new(bank, model, inventory, cfg)?.predict(inst)
}

/// Dev F1 of `model`, with a bank built from `train`.
pub fn dev_f1(train: &Corpus, model: &EncoderModel, dev: &[GoldInstance], cfg: &InferenceConfig) -> Result<f64> {
    let bank = build_support_bank(train, model, cfg, "")?;
    let predictor = Predictor::new(&bank, model, train.inventory(), cfg)?;
    let preds = predictor.predict_all(dev.iter().map(|g| &g.instance))?;
    Ok(crate::eval::f1(&preds, dev)?.f1)
}

pub fn predictions_to_jsonl(preds: &[Prediction]) -> String {
    let mut out = String::new();
    for p in preds {
        out.push_str(&serde_json::to_string(p).expect("prediction serializes"));
        out.push('\n');
    }
    out
}

pub fn write_predictions(preds: &[Prediction], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, predictions_to_jsonl(preds)).map_err(|e| Error::io(path, e))
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Line {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_util::*;
    use crate::encoder::EncoderConfig;

    fn small_model() -> EncoderModel {
        EncoderModel::init(EncoderConfig {
            embedding_dim: 8,
            hash_buckets: 128,
            ..EncoderConfig::default()
        })
        .unwrap()
    }

    fn corpus_with_counts(counts: &[(&str, usize)]) -> Corpus {
        let senses: Vec<&str> = counts.iter().map(|(s, _)| *s).collect();
        let inv = inventory(&[("w|n", &senses), ("other|v", &["o1", "o2"])]);
        let mut instances = Vec::new();
        for (s, n) in counts {
            for k in 0..*n {
                instances.push(inst(&format!("{s}-{k}"), "w|n", Some(s), &["a", "w", &format!("t{k}")], 1));
            }
        }
        Corpus::from_instances(instances, inv).unwrap()
    }

    #[test]
    fn bank_sizes_are_capped_by_i_s() {
        let corpus = corpus_with_counts(&[("s1", 5), ("s2", 100)]);
        let bank = build_support_bank(&corpus, &small_model(), &InferenceConfig::default(), "x").unwrap();
        let senses = bank.senses(&wk("w|n")).unwrap();
        assert_eq!(senses[&sid("s1")].len(), 5);
        assert_eq!(senses[&sid("s2")].len(), 30);
        assert!(bank.senses(&wk("other|v")).is_none());
        let again = build_support_bank(&corpus, &small_model(), &InferenceConfig::default(), "x").unwrap();
        assert_eq!(bank, again);
        let other_seed = InferenceConfig {
            seed: 9,
            ..InferenceConfig::default()
        };
        let b2 = build_support_bank(&corpus, &small_model(), &other_seed, "x").unwrap();
        assert_ne!(bank.words[&wk("w|n")][&sid("s2")], b2.words[&wk("w|n")][&sid("s2")]);
    }

    #[test]
    fn single_sense_word_predicts_it_with_certainty() {
        let corpus = corpus_with_counts(&[("s2", 3)]);
        let model = small_model();
        let cfg = InferenceConfig::default();
        let bank = build_support_bank(&corpus, &model, &cfg, "").unwrap();
        let q = inst("q", "w|n", None, &["w"], 0);
        let p = predict(&q, &bank, &model, corpus.inventory(), &cfg).unwrap();
        assert_eq!(p.sense, sid("s2"));
        assert_eq!(p.provenance, "metric");
        assert_eq!(p.probs.unwrap()[&sid("s2")], 1.0);
    }

    #[test]
    fn unseen_word_falls_back_to_first_sense() {
        let corpus = corpus_with_counts(&[("s1", 3), ("s2", 3)]);
        let model = small_model();
        let bank = build_support_bank(&corpus, &model, &InferenceConfig::default(), "").unwrap();
        let q = inst("q", "other|v", None, &["other"], 0);
        for (fb, label) in [(Fallback::S1, "s1-fallback"), (Fallback::Mfs, "mfs-fallback")] {
            let cfg = InferenceConfig {
                fallback: fb,
                ..InferenceConfig::default()
            };
            let p = predict(&q, &bank, &model, corpus.inventory(), &cfg).unwrap();
            assert_eq!(p.sense, sid("o1"));
            assert_eq!(p.provenance, label);
            assert!(p.probs.is_none());
        }
        let missing = inst("q", "nowhere|n", None, &["x"], 0);
        assert!(predict(&missing, &bank, &model, corpus.inventory(), &InferenceConfig::default()).is_err());
    }

    #[test]
    fn two_prototype_softmax_case() {
        let inv = inventory(&[("w|n", &["a", "b"])]);
        let protos = vec![
            Prototype {
                sense: sid("a"),
                vector: vec![1.0, 0.0],
                support_count: 1,
            },
            Prototype {
                sense: sid("b"),
                vector: vec![0.0, 1.0],
                support_count: 1,
            },
        ];
        let dist = class_probabilities(&protos, &[0.9, 0.1], ScoreFn::Dot).unwrap();
        let e9 = 0.9f64.exp();
        let e1 = 0.1f64.exp();
        assert_eq!(dist.argmax(), Some(&sid("a")));
        assert!((dist.get(&sid("a")) - e9 / (e9 + e1)).abs() < 1e-12);
        assert!((dist.get(&sid("a")) - 0.6900).abs() < 1e-4);
        assert!(inv.contains(&wk("w|n"), dist.argmax().unwrap()));
    }

    #[test]
    fn predictions_stay_in_inventory_and_round_trip() {
        let corpus = corpus_with_counts(&[("s1", 6), ("s2", 4), ("s3", 1)]);
        let model = small_model();
        let cfg = InferenceConfig::default();
        let bank = build_support_bank(&corpus, &model, &cfg, "").unwrap();
        let predictor = Predictor::new(&bank, &model, corpus.inventory(), &cfg).unwrap();
        let preds = predictor.predict_all(corpus.instances()).unwrap();
        assert_eq!(preds.len(), corpus.len());
        for p in &preds {
            assert!(corpus.inventory().contains(&wk("w|n"), &p.sense));
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        write_predictions(&preds, &path).unwrap();
        assert_eq!(load_predictions(&path).unwrap(), preds);
        let bank_path = dir.path().join("bank.json");
        bank.save(&bank_path).unwrap();
        assert_eq!(SupportBank::load(&bank_path).unwrap(), bank);
    }

    #[test]
    fn gloss_scoring_prefers_sense_whose_gloss_matches() {
        let mut glosses = BTreeMap::new();
        glosses.insert(sid("a"), vec!["river".to_string(), "water".to_string()]);
        glosses.insert(sid("b"), vec!["money".to_string(), "loan".to_string()]);
        let mut senses = BTreeMap::new();
        senses.insert(wk("bank|n"), vec![sid("a"), sid("b")]);
        let inv = SenseInventory::new(senses, glosses).unwrap();
        let corpus = Corpus::from_instances(
            vec![
                inst("1", "bank|n", Some("a"), &["bank"], 0),
                inst("2", "bank|n", Some("b"), &["bank"], 0),
            ],
            inv,
        )
        .unwrap();
        let model = EncoderModel::init(EncoderConfig {
            embedding_dim: 8,
            hash_buckets: 512,
            gloss_encoder: true,
            ..EncoderConfig::default()
        })
        .unwrap();
        let cfg = InferenceConfig {
            use_glosses: true,
            ..InferenceConfig::default()
        };
        let bank = build_support_bank(&corpus, &model, &cfg, "").unwrap();
        let predictor = Predictor::new(&bank, &model, corpus.inventory(), &cfg).unwrap();
        let q = inst("q", "bank|n", None, &["bank"], 0);
        let dist = predictor.distribution(&q).unwrap().unwrap();
        // Identical supports: only the gloss term separates the senses.
        let ga = model.encode_gloss(corpus.inventory().gloss(&sid("a")).unwrap()).unwrap();
        let gb = model.encode_gloss(corpus.inventory().gloss(&sid("b")).unwrap()).unwrap();
        let qv = model.encode(&q);
        let da = crate::metric::sq_dist(&ga, &qv);
        let db = crate::metric::sq_dist(&gb, &qv);
        assert_eq!(dist.get(&sid("a")) > dist.get(&sid("b")), da < db);
    }
}
