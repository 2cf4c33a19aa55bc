//! Annotated instances, sense inventories, and the per-word grouping used by
//! episodic training.

mod fixture;
mod io;
mod stats;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fixture::{generate_fixture, Fixture, FixtureConfig};
pub use io::{
    load_corpus, load_gold, load_instances, load_inventory, parse_corpus, parse_gold,
    parse_instances, parse_inventory, write_corpus, write_gold, write_instances, write_inventory,
    InstanceRecord,
};
pub use stats::{corpus_stats, CorpusStats, DEFAULT_FREQ_THRESHOLD};

/// Opaque sense identifier, e.g. a WordNet sense key `art%1:06:00::`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SenseId(String);

impl SenseId {
    pub fn new(key: impl Into<String>) -> Result<Self> {
        let key = key.into();
        if key.is_empty() {
            return Err(Error::validation("empty sense id"));
        }
        Ok(SenseId(key))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SenseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pos {
    #[serde(rename = "n")]
    Noun,
    #[serde(rename = "v")]
    Verb,
    #[serde(rename = "a")]
    Adj,
    #[serde(rename = "r")]
    Adv,
}

impl Pos {
    pub const ALL: [Pos; 4] = [Pos::Noun, Pos::Verb, Pos::Adj, Pos::Adv];

    pub fn tag(self) -> &'static str {
        match self {
            Pos::Noun => "n",
            Pos::Verb => "v",
            Pos::Adj => "a",
            Pos::Adv => "r",
        }
    }
}

impl FromStr for Pos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(Pos::Noun),
            "v" => Ok(Pos::Verb),
            "a" => Ok(Pos::Adj),
            "r" => Ok(Pos::Adv),
            other => Err(Error::validation(format!(
                "unknown part of speech {other:?} (expected n, v, a or r)"
            ))),
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// A lemma plus its part of speech; one classification task per key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WordKey {
    lemma: String,
    pos: Pos,
}

impl WordKey {
    pub fn new(lemma: impl Into<String>, pos: Pos) -> Result<Self> {
        let lemma = lemma.into();
        if lemma.is_empty() {
            return Err(Error::validation("empty lemma"));
        }
        if lemma.contains('|') {
            return Err(Error::validation(format!("lemma {lemma:?} contains '|'")));
        }
        Ok(WordKey { lemma, pos })
    }

    pub fn lemma(&self) -> &str {
        &self.lemma
    }

    pub fn pos(&self) -> Pos {
        self.pos
    }
}

impl fmt::Display for WordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.lemma, self.pos)
    }
}

impl FromStr for WordKey {
    type Err = Error;

    /// Parses the `lemma|pos` form used as inventory keys.
    fn from_str(s: &str) -> Result<Self> {
        let (lemma, pos) = s
            .rsplit_once('|')
            .ok_or_else(|| Error::validation(format!("word key {s:?} is not of the form lemma|pos")))?;
        WordKey::new(lemma, pos.parse()?)
    }
}

impl Serialize for WordKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for WordKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One annotated (or to-be-annotated) occurrence: sentence plus target position.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub tokens: Vec<String>,
    pub target_index: usize,
    pub word: WordKey,
    pub gold: Option<SenseId>,
}

impl Instance {
    pub fn new(
        id: impl Into<String>,
        tokens: Vec<String>,
        target_index: usize,
        word: WordKey,
        gold: Option<SenseId>,
    ) -> Result<Self> {
        let id = id.into();
        if tokens.is_empty() {
            return Err(Error::validation(format!("instance {id:?} has no tokens")));
        }
        if target_index >= tokens.len() {
            return Err(Error::validation(format!(
                "instance {id:?}: target_index {target_index} out of range for {} tokens",
                tokens.len()
            )));
        }
        Ok(Instance {
            id,
            tokens,
            target_index,
            word,
            gold,
        })
    }

    pub fn target(&self) -> &str {
        &self.tokens[self.target_index]
    }

    /// Gold sense; training code only ever sees labelled instances.
    pub fn gold_sense(&self) -> &SenseId {
        self.gold
            .as_ref()
            .expect("labelled instance required (training corpora never hold unlabelled ones)")
    }
}

/// A labelled evaluation instance tagged with the dataset it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldInstance {
    pub instance: Instance,
    pub dataset: String,
}

/// All labelled training instances of one word, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct WordTask {
    pub word: WordKey,
    pub instances: Vec<Instance>,
}

impl WordTask {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Training count per gold sense.
    pub fn sense_counts(&self) -> BTreeMap<&SenseId, usize> {
        let mut counts = BTreeMap::new();
        for inst in &self.instances {
            *counts.entry(inst.gold_sense()).or_insert(0) += 1;
        }
        counts
    }

    /// Most frequent training sense, ties to the lexicographically smallest id.
    pub fn most_frequent_sense(&self) -> Option<&SenseId> {
        // BTreeMap iterates in ascending id order; strict `>` keeps the first maximum.
        let mut best: Option<(&SenseId, usize)> = None;
        for (sense, count) in self.sense_counts() {
            if best.is_none_or(|(_, c)| count > c) {
                best = Some((sense, count));
            }
        }
        best.map(|(s, _)| s)
    }
}

/// Allowed senses per word. List order defines the "first sense".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SenseInventory {
    senses: BTreeMap<WordKey, Vec<SenseId>>,
    glosses: BTreeMap<SenseId, Vec<String>>,
    owner: BTreeMap<SenseId, WordKey>,
}

impl SenseInventory {
    pub fn new(
        senses: BTreeMap<WordKey, Vec<SenseId>>,
        glosses: BTreeMap<SenseId, Vec<String>>,
    ) -> Result<Self> {
        let mut owner = BTreeMap::new();
        for (word, list) in &senses {
            if list.is_empty() {
                return Err(Error::validation(format!("word {word} has an empty sense list")));
            }
            let mut seen = HashSet::new();
            for sense in list {
                if !seen.insert(sense) {
                    return Err(Error::validation(format!(
                        "duplicate sense {sense} in the list for {word}"
                    )));
                }
                if let Some(prev) = owner.insert(sense.clone(), word.clone()) {
                    return Err(Error::validation(format!(
                        "sense {sense} listed under both {prev} and {word}"
                    )));
                }
            }
        }
        for (sense, gloss) in &glosses {
            if !owner.contains_key(sense) {
                return Err(Error::validation(format!("gloss for unknown sense {sense}")));
            }
            if gloss.is_empty() {
                return Err(Error::validation(format!("empty gloss for sense {sense}")));
            }
        }
        Ok(SenseInventory {
            senses,
            glosses,
            owner,
        })
    }

    pub fn senses(&self, word: &WordKey) -> Option<&[SenseId]> {
        self.senses.get(word).map(Vec::as_slice)
    }

    pub fn first_sense(&self, word: &WordKey) -> Option<&SenseId> {
        self.senses.get(word).and_then(|l| l.first())
    }

    pub fn contains(&self, word: &WordKey, sense: &SenseId) -> bool {
        self.owner.get(sense) == Some(word)
    }

    pub fn gloss(&self, sense: &SenseId) -> Option<&[String]> {
        self.glosses.get(sense).map(Vec::as_slice)
    }

    pub fn words(&self) -> impl Iterator<Item = (&WordKey, &[SenseId])> {
        self.senses.iter().map(|(w, l)| (w, l.as_slice()))
    }

    pub fn glosses(&self) -> &BTreeMap<SenseId, Vec<String>> {
        &self.glosses
    }

    /// Every sense id across all words, in (word, list) order.
    pub fn all_senses(&self) -> impl Iterator<Item = &SenseId> {
        self.senses.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.senses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senses.is_empty()
    }
}

/// A labelled training corpus grouped by word, plus its inventory.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    tasks: BTreeMap<WordKey, WordTask>,
    inventory: SenseInventory,
}

impl Corpus {
    /// Groups labelled instances by word and validates them against `inventory`.
    pub fn from_instances(instances: Vec<Instance>, inventory: SenseInventory) -> Result<Self> {
        let mut tasks: BTreeMap<WordKey, WordTask> = BTreeMap::new();
        let mut ids = HashSet::new();
        for inst in instances {
            validate_labelled(&inst, &inventory)?;
            if !ids.insert(inst.id.clone()) {
                return Err(Error::validation(format!("duplicate instance id {:?}", inst.id)));
            }
            tasks
                .entry(inst.word.clone())
                .or_insert_with(|| WordTask {
                    word: inst.word.clone(),
                    instances: Vec::new(),
                })
                .instances
                .push(inst);
        }
        Ok(Corpus { tasks, inventory })
    }

    pub fn tasks(&self) -> &BTreeMap<WordKey, WordTask> {
        &self.tasks
    }

    pub fn task(&self, word: &WordKey) -> Option<&WordTask> {
        self.tasks.get(word)
    }

    pub fn inventory(&self) -> &SenseInventory {
        &self.inventory
    }

    /// Total number of instances, N summed over words.
    pub fn len(&self) -> usize {
        self.tasks.values().map(WordTask::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        self.tasks.values().flat_map(|t| t.instances.iter())
    }

    /// Training count of `sense` for `word` (0 when unseen).
    pub fn sense_count(&self, word: &WordKey, sense: &SenseId) -> usize {
        self.tasks.get(word).map_or(0, |t| {
            t.instances.iter().filter(|i| i.gold.as_ref() == Some(sense)).count()
        })
    }

    /// Distinct training senses of a word.
    pub fn observed_senses(&self, word: &WordKey) -> BTreeSet<&SenseId> {
        self.tasks
            .get(word)
            .map(|t| t.instances.iter().map(Instance::gold_sense).collect())
            .unwrap_or_default()
    }
}

pub(crate) fn validate_labelled(inst: &Instance, inventory: &SenseInventory) -> Result<()> {
    let gold = inst
        .gold
        .as_ref()
        .ok_or_else(|| Error::validation(format!("instance {:?} has no sense label", inst.id)))?;
    validate_word(inst, inventory)?;
    if !inventory.contains(&inst.word, gold) {
        return Err(Error::validation(format!(
            "instance {:?}: sense {gold} is not in the inventory for {}",
            inst.id, inst.word
        )));
    }
    Ok(())
}

pub(crate) fn validate_word(inst: &Instance, inventory: &SenseInventory) -> Result<()> {
    if inventory.senses(&inst.word).is_none() {
        return Err(Error::validation(format!(
            "instance {:?}: word {} is not in the inventory",
            inst.id, inst.word
        )));
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;

    pub fn sid(s: &str) -> SenseId {
        SenseId::new(s).unwrap()
    }

    pub fn wk(s: &str) -> WordKey {
        s.parse().unwrap()
    }

    pub fn inst(id: &str, word: &str, sense: Option<&str>, tokens: &[&str], t: usize) -> Instance {
        Instance::new(
            id,
            tokens.iter().map(|s| s.to_string()).collect(),
            t,
            wk(word),
            sense.map(sid),
        )
        .unwrap()
    }

    pub fn inventory(entries: &[(&str, &[&str])]) -> SenseInventory {
        let senses = entries
            .iter()
            .map(|(w, l)| (wk(w), l.iter().map(|s| sid(s)).collect()))
            .collect();
        SenseInventory::new(senses, BTreeMap::new()).unwrap()
    }
}
