//! Episode construction.
//!
//! For every eligible word the instances are split at random into candidate
//! support and query sets with ratio `r`. A candidate support set larger than
//! `K` is subsampled to `K` instances with per-instance weights; the balanced
//! strategy gives every sense the same total weight, the uniform strategy
//! gives every instance the same weight. Instances left out of the support
//! subsample join the query set.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Instance, SenseId, WordKey, WordTask};
use crate::error::{Error, Result};
use crate::rng::{self, WsdRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Equal total weight per sense.
    #[serde(alias = "P_b", alias = "pb")]
    Balanced,
    /// Equal weight per instance.
    #[serde(alias = "P_u", alias = "pu")]
    Uniform,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" | "P_b" | "pb" => Ok(Strategy::Balanced),
            "uniform" | "P_u" | "pu" => Ok(Strategy::Uniform),
            other => Err(Error::config(format!(
                "unknown sampling strategy {other:?} (expected balanced or uniform)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Maximum support set size.
    pub max_support: usize,
    /// Fraction of a word's instances that go to the candidate support set.
    pub split_ratio: f64,
    pub strategy: Strategy,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            max_support: 40,
            split_ratio: 0.4,
            strategy: Strategy::Balanced,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_support == 0 {
            return Err(Error::config("max_support (K) must be at least 1"));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::config(format!(
                "split_ratio (r) must lie in (0, 1), got {}",
                self.split_ratio
            )));
        }
        Ok(())
    }
}

/// Support and query sets for one word.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode<'a> {
    pub word: WordKey,
    pub support: Vec<&'a Instance>,
    pub query: Vec<&'a Instance>,
}

impl<'a> Episode<'a> {
    /// Distinct senses present in the support set.
    pub fn support_senses(&self) -> BTreeSet<&'a SenseId> {
        self.support.iter().map(|i| i.gold_sense()).collect()
    }

    /// Queries whose gold sense has at least one support example.
    pub fn retained_queries(&self) -> Vec<&'a Instance> {
        let senses = self.support_senses();
        self.query
            .iter()
            .copied()
            .filter(|q| senses.contains(q.gold_sense()))
            .collect()
    }

    /// Queries excluded from the loss because their sense was not sampled.
    pub fn dropped_queries(&self) -> usize {
        self.query.len() - self.retained_queries().len()
    }
}

/// The episodes of one epoch, at most one per word, in shuffled order.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochPlan<'a> {
    pub epoch: u64,
    pub episodes: Vec<Episode<'a>>,
}

/// Draws `k` distinct items, each draw proportional to the remaining weights.
pub fn weighted_choice_without_replacement<T: Clone>(
    items: &[T],
    weights: &[f64],
    k: usize,
    rng: &mut WsdRng,
) -> Result<Vec<T>> {
    if items.len() != weights.len() {
        return Err(Error::Sampling(format!(
            "{} items but {} weights",
            items.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Sampling("weights must be finite and non-negative".into()));
    }
    let positive = weights.iter().filter(|w| **w > 0.0).count();
    if positive < k {
        return Err(Error::Sampling(format!(
            "cannot draw {k} items: only {positive} have positive weight"
        )));
    }

    let mut remaining: Vec<usize> = (0..items.len()).filter(|&i| weights[i] > 0.0).collect();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = remaining.iter().map(|&i| weights[i]).sum();
        let mut u = rng.random::<f64>() * total;
        // Fall back to the last candidate if rounding leaves u >= total.
        let mut pick = remaining.len() - 1;
        for (pos, &i) in remaining.iter().enumerate() {
            if u < weights[i] {
                pick = pos;
                break;
            }
            u -= weights[i];
        }
        out.push(items[remaining.remove(pick)].clone());
    }
    Ok(out)
}

/// Candidate support size: `round_half_up(r * n)` clamped to `[1, n - 1]`.
pub fn support_split_size(n: usize, ratio: f64) -> usize {
    let raw = (ratio * n as f64 + 0.5).floor() as usize;
    raw.clamp(1, n.saturating_sub(1).max(1))
}

/// Uniformly random partition of a task into candidate support and query sets.
pub fn split_support_query<'a>(
    task: &'a WordTask,
    ratio: f64,
    rng: &mut WsdRng,
) -> Result<(Vec<&'a Instance>, Vec<&'a Instance>)> {
    let n = task.len();
    if n < 2 {
        return Err(Error::Sampling(format!(
            "word {} has {n} instance(s); a split needs at least 2",
            task.word
        )));
    }
    let mut shuffled: Vec<&Instance> = task.instances.iter().collect();
    shuffled.shuffle(rng);
    let query = shuffled.split_off(support_split_size(n, ratio));
    Ok((shuffled, query))
}

/// Per-instance sampling weights for a candidate support set, given the gold
/// sense of each candidate. Weights sum to 1.
pub fn episode_weights(senses: &[&SenseId], strategy: Strategy) -> Vec<f64> {
    episode_weight_denominators(senses, strategy)
        .into_iter()
        .map(|d| 1.0 / d as f64)
        .collect()
}

/// The same weights as unit fractions `1 / d`: `|S_j| * J` for balanced,
/// `|S|` for uniform.
pub fn episode_weight_denominators(senses: &[&SenseId], strategy: Strategy) -> Vec<u64> {
    let n = senses.len() as u64;
    match strategy {
        Strategy::Uniform => vec![n; senses.len()],
        Strategy::Balanced => {
            let mut per_sense: BTreeMap<&SenseId, u64> = BTreeMap::new();
            for s in senses {
                *per_sense.entry(*s).or_default() += 1;
            }
            let j = per_sense.len() as u64;
            senses.iter().map(|s| per_sense[*s] * j).collect()
        }
    }
}

/// Builds one episode for a task that passed [`is_eligible`].
pub fn build_episode<'a>(
    task: &'a WordTask,
    cfg: &SamplingConfig,
    rng: &mut WsdRng,
) -> Result<Episode<'a>> {
    let (candidates, mut query) = split_support_query(task, cfg.split_ratio, rng)?;
    if candidates.len() <= cfg.max_support {
        return Ok(Episode {
            word: task.word.clone(),
            support: candidates,
            query,
        });
    }
    let senses: Vec<&SenseId> = candidates.iter().map(|i| i.gold_sense()).collect();
    let weights = episode_weights(&senses, cfg.strategy);
    let positions: Vec<usize> = (0..candidates.len()).collect();
    let mut chosen = weighted_choice_without_replacement(&positions, &weights, cfg.max_support, rng)?;
    // Keep the support in candidate order so downstream sums are order-stable.
    chosen.sort_unstable();
    let chosen_set: HashSet<usize> = chosen.iter().copied().collect();
    let support = chosen.iter().map(|&p| candidates[p]).collect();
    query.extend(
        candidates
            .iter()
            .enumerate()
            .filter(|(p, _)| !chosen_set.contains(p))
            .map(|(_, inst)| *inst),
    );
    Ok(Episode {
        word: task.word.clone(),
        support,
        query,
    })
}

/// A word is trained on only if it has at least two training senses and at
/// least one sense with two or more examples.
pub fn is_eligible(task: &WordTask) -> bool {
    let counts = task.sense_counts();
    counts.len() >= 2 && counts.values().any(|&c| c >= 2)
}

/// Per-word stream for a given epoch.
pub fn episode_rng(seed: u64, epoch: u64, word: &WordKey) -> WsdRng {
    let key = word.to_string();
    rng::derive(seed, &["episode".into(), epoch.into(), key.as_str().into()])
}

/// One episode per eligible word for `epoch`, in shuffled order.
pub fn build_epoch<'a>(corpus: &'a Corpus, cfg: &SamplingConfig, epoch: u64) -> Result<EpochPlan<'a>> {
    cfg.validate()?;
    let mut episodes = Vec::new();
    for task in corpus.tasks().values().filter(|t| is_eligible(t)) {
        let mut rng = episode_rng(cfg.seed, epoch, &task.word);
        episodes.push(build_episode(task, cfg, &mut rng)?);
    }
    if episodes.is_empty() {
        return Err(Error::Sampling(
            "no eligible word: every word has a single training sense or one example per sense"
                .into(),
        ));
    }
    let mut order_rng = rng::derive(cfg.seed, &["epoch-order".into(), epoch.into()]);
    episodes.shuffle(&mut order_rng);
    Ok(EpochPlan { epoch, episodes })
}

#[derive(Serialize)]
struct EpisodeLine<'a> {
    word: String,
    support: Vec<[&'a str; 2]>,
    query: Vec<[&'a str; 2]>,
    dropped_queries: usize,
}

impl EpochPlan<'_> {
    /// One JSON line per episode: word, (id, sense) pairs, dropped-query count.
    pub fn to_jsonl(&self) -> String {
        let pairs = |v: &[&Instance]| -> Vec<[String; 2]> {
            v.iter()
                .map(|i| [i.id.clone(), i.gold_sense().to_string()])
                .collect()
        };
        let mut out = String::new();
        for ep in &self.episodes {
            let support = pairs(&ep.support);
            let query = pairs(&ep.query);
            let line = EpisodeLine {
                word: ep.word.to_string(),
                support: support.iter().map(|[a, b]| [a.as_str(), b.as_str()]).collect(),
                query: query.iter().map(|[a, b]| [a.as_str(), b.as_str()]).collect(),
                dropped_queries: ep.dropped_queries(),
            };
            out.push_str(&serde_json::to_string(&line).expect("episode serializes"));
            out.push('\n');
        }
        out
    }
}
