//! Synthetic long-tail corpora.
//!
//! Word frequencies follow a Zipf law over rank, sense frequencies inside a
//! word are skewed towards the first sense, and each sense owns a "topic"
//! vocabulary that shows up in its contexts. Topics are shared across words,
//! so a metric learned on frequent words carries over to rare ones.

use std::collections::{BTreeMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::{Corpus, GoldInstance, Instance, Pos, SenseId, SenseInventory, WordKey};
use crate::error::{Error, Result};
use crate::rng::{self, WsdRng};

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureConfig {
    pub seed: u64,
    pub n_words: usize,
    pub zipf_s: f64,
    /// Inclusive range of inventory senses per word.
    pub senses_per_word: (usize, usize),
    /// Training count of the rank-1 word.
    pub max_count: usize,
    /// Sense j (1-based) is drawn with weight 1 / j^sense_skew.
    pub sense_skew: f64,
    pub n_topics: usize,
    pub topic_vocab: usize,
    pub filler_vocab: usize,
    pub sentence_len: (usize, usize),
    /// Probability that a context token comes from the gold sense's topic.
    pub signal_prob: f64,
    /// Probability that a context token comes from an unrelated topic.
    pub noise_prob: f64,
    pub test_fraction: f64,
    pub min_test_per_word: usize,
    pub dev_fraction: f64,
    pub min_dev_per_word: usize,
    /// Words that appear only in the inventory and the evaluation sets.
    pub n_unseen_words: usize,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            seed: 7,
            n_words: 200,
            zipf_s: 1.1,
            senses_per_word: (2, 4),
            max_count: 300,
            sense_skew: 1.5,
            n_topics: 30,
            topic_vocab: 6,
            filler_vocab: 400,
            sentence_len: (8, 14),
            signal_prob: 0.3,
            noise_prob: 0.1,
            test_fraction: 0.25,
            min_test_per_word: 2,
            dev_fraction: 0.15,
            min_dev_per_word: 1,
            n_unseen_words: 10,
        }
    }
}

/// A generated inventory with train, dev and tagged test splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub inventory: SenseInventory,
    pub train: Corpus,
    pub dev: Vec<GoldInstance>,
    pub test: Vec<GoldInstance>,
}

struct WordSpec {
    key: WordKey,
    senses: Vec<SenseId>,
    topics: Vec<usize>,
    train_count: usize,
}

pub fn generate_fixture(cfg: &FixtureConfig) -> Result<Fixture> {
    let (lo, hi) = cfg.senses_per_word;
    if cfg.n_words == 0 {
        return Err(Error::config("fixture needs at least one word"));
    }
    if lo == 0 || lo > hi {
        return Err(Error::config(format!("degenerate senses_per_word range {lo}..={hi}")));
    }
    if hi > cfg.n_topics {
        return Err(Error::config(format!(
            "senses_per_word upper bound {hi} exceeds n_topics {}",
            cfg.n_topics
        )));
    }
    let (len_lo, len_hi) = cfg.sentence_len;
    if len_lo == 0 || len_lo > len_hi {
        return Err(Error::config(format!("degenerate sentence_len range {len_lo}..={len_hi}")));
    }
    if cfg.topic_vocab == 0 || cfg.filler_vocab == 0 || cfg.max_count == 0 {
        return Err(Error::config("fixture vocabularies and max_count must be positive"));
    }
    if !(0.0..=1.0).contains(&(cfg.signal_prob + cfg.noise_prob)) {
        return Err(Error::config("signal_prob + noise_prob must lie in [0, 1]"));
    }

    let mut rng = rng::seeded(cfg.seed);
    let mut words_seen = HashSet::new();
    let total_words = cfg.n_words + cfg.n_unseen_words;
    let lemmas: Vec<String> = (0..total_words)
        .map(|_| pseudo_word(&mut rng, &mut words_seen, 2, 3))
        .collect();
    let fillers: Vec<String> = (0..cfg.filler_vocab)
        .map(|_| pseudo_word(&mut rng, &mut words_seen, 1, 3))
        .collect();
    let topics: Vec<Vec<String>> = (0..cfg.n_topics)
        .map(|_| {
            (0..cfg.topic_vocab)
                .map(|_| pseudo_word(&mut rng, &mut words_seen, 2, 3))
                .collect()
        })
        .collect();

    // Zipf counts by rank; ranks are assigned in lemma generation order,
    // which is already random.
    let mut specs = Vec::with_capacity(total_words);
    let topic_ids: Vec<usize> = (0..cfg.n_topics).collect();
    for (i, lemma) in lemmas.into_iter().enumerate() {
        let pos = *[Pos::Noun, Pos::Noun, Pos::Noun, Pos::Verb, Pos::Verb, Pos::Adj, Pos::Adv]
            .choose(&mut rng)
            .expect("non-empty");
        let key = WordKey::new(lemma.clone(), pos)?;
        let n_senses = rng.random_range(lo..=hi);
        let senses = (0..n_senses)
            .map(|j| SenseId::new(format!("{lemma}%{}:{:02}", pos.tag(), j + 1)))
            .collect::<Result<Vec<_>>>()?;
        let topics: Vec<usize> = topic_ids.choose_multiple(&mut rng, n_senses).copied().collect();
        let train_count = if i < cfg.n_words {
            let rank = (i + 1) as f64;
            ((cfg.max_count as f64 / rank.powf(cfg.zipf_s)).round() as usize).max(1)
        } else {
            0
        };
        specs.push(WordSpec {
            key,
            senses,
            topics,
            train_count,
        });
    }

    let mut senses_map = BTreeMap::new();
    let mut glosses = BTreeMap::new();
    for spec in &specs {
        senses_map.insert(spec.key.clone(), spec.senses.clone());
        for (sense, &topic) in spec.senses.iter().zip(&spec.topics) {
            let mut gloss: Vec<String> =
                topics[topic].choose_multiple(&mut rng, 4.min(cfg.topic_vocab)).cloned().collect();
            gloss.extend(fillers.choose_multiple(&mut rng, 2).cloned());
            glosses.insert(sense.clone(), gloss);
        }
    }
    let inventory = SenseInventory::new(senses_map, glosses)?;

    let ctx = Generator {
        cfg,
        fillers: &fillers,
        topics: &topics,
    };
    let mut train = Vec::new();
    let mut dev = Vec::new();
    let mut test = Vec::new();
    let datasets = ["test-a", "test-b"];
    for spec in &specs {
        for _ in 0..spec.train_count {
            let id = format!("train.{:06}", train.len());
            train.push(ctx.instance(&mut rng, spec, id)?);
        }
        let base = spec.train_count.max(1) as f64;
        let n_dev = ((cfg.dev_fraction * base).round() as usize).max(cfg.min_dev_per_word);
        for _ in 0..n_dev {
            let id = format!("dev.{:06}", dev.len());
            dev.push(GoldInstance {
                instance: ctx.instance(&mut rng, spec, id)?,
                dataset: "dev".to_string(),
            });
        }
        let n_test = ((cfg.test_fraction * base).round() as usize).max(cfg.min_test_per_word);
        for _ in 0..n_test {
            let id = format!("test.{:06}", test.len());
            let dataset = datasets[test.len() % datasets.len()].to_string();
            test.push(GoldInstance {
                instance: ctx.instance(&mut rng, spec, id)?,
                dataset,
            });
        }
    }
    train.shuffle(&mut rng);

    Ok(Fixture {
        train: Corpus::from_instances(train, inventory.clone())?,
        inventory,
        dev,
        test,
    })
}

struct Generator<'a> {
    cfg: &'a FixtureConfig,
    fillers: &'a [String],
    topics: &'a [Vec<String>],
}

impl Generator<'_> {
    fn instance(&self, rng: &mut WsdRng, spec: &WordSpec, id: String) -> Result<Instance> {
        let weights: Vec<f64> = (1..=spec.senses.len())
            .map(|j| 1.0 / (j as f64).powf(self.cfg.sense_skew))
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut sense_idx = weights.len() - 1;
        for (j, w) in weights.iter().enumerate() {
            if u < *w {
                sense_idx = j;
                break;
            }
            u -= w;
        }
        let topic = spec.topics[sense_idx];

        let len = rng.random_range(self.cfg.sentence_len.0..=self.cfg.sentence_len.1);
        let target = rng.random_range(0..len);
        let mut tokens = Vec::with_capacity(len);
        for i in 0..len {
            if i == target {
                tokens.push(spec.key.lemma().to_string());
                continue;
            }
            let roll: f64 = rng.random();
            let word = if roll < self.cfg.signal_prob {
                self.topics[topic].choose(rng)
            } else if roll < self.cfg.signal_prob + self.cfg.noise_prob {
                let other = rng.random_range(0..self.topics.len());
                self.topics[other].choose(rng)
            } else {
                self.fillers.choose(rng)
            };
            tokens.push(word.expect("non-empty vocabulary").clone());
        }
        Instance::new(
            id,
            tokens,
            target,
            spec.key.clone(),
            Some(spec.senses[sense_idx].clone()),
        )
    }
}

const ONSETS: [&str; 16] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "tr",
];
const NUCLEI: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];

fn pseudo_word(rng: &mut WsdRng, seen: &mut HashSet<String>, min_syl: usize, max_syl: usize) -> String {
    loop {
        let n = rng.random_range(min_syl..=max_syl);
        let mut w = String::new();
        for _ in 0..n {
            w.push_str(ONSETS.choose(rng).expect("non-empty"));
            w.push_str(NUCLEI.choose(rng).expect("non-empty"));
        }
        if seen.insert(w.clone()) {
            return w;
        }
    }
}
