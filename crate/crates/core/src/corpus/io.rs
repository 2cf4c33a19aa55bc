use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate_labelled, Corpus, GoldInstance, Instance, Pos, SenseId, SenseInventory, WordKey};
use crate::error::{Error, Result};

/// One line of a corpus, prediction-input, or gold JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub target_index: usize,
    pub lemma: String,
    pub pos: Pos,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sense: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
}

impl InstanceRecord {
    pub fn from_instance(inst: &Instance, dataset: Option<&str>) -> Self {
        InstanceRecord {
            id: inst.id.clone(),
            tokens: inst.tokens.clone(),
            target_index: inst.target_index,
            lemma: inst.word.lemma().to_string(),
            pos: inst.word.pos(),
            sense: inst.gold.as_ref().map(|s| s.as_str().to_string()),
            dataset: dataset.map(str::to_string),
        }
    }

    pub fn to_instance(&self) -> Result<Instance> {
        let word = WordKey::new(self.lemma.clone(), self.pos)?;
        let gold = self.sense.clone().map(SenseId::new).transpose()?;
        Instance::new(self.id.clone(), self.tokens.clone(), self.target_index, word, gold)
    }

    /// Canonical single-line JSON (sorted keys).
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("record serializes");
        serde_json::to_string(&value).expect("value serializes")
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses JSONL records, returning each with its 1-based line number.
/// Blank lines are skipped.
pub(crate) fn parse_records(text: &str, origin: &Path) -> Result<Vec<(usize, InstanceRecord)>> {
    let line_err = |line: usize, message: String| Error::Line {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: InstanceRecord = serde_json::from_str(line)
            .map_err(|e| line_err(lineno, format!("malformed record: {e}")))?;
        record
            .to_instance()
            .map_err(|e| line_err(lineno, e.to_string()))?;
        if !ids.insert(record.id.clone()) {
            return Err(line_err(lineno, format!("duplicate instance id {:?}", record.id)));
        }
        out.push((lineno, record));
    }
    Ok(out)
}

/// Parses a training corpus from JSONL text. `origin` is used in error messages.
pub fn parse_corpus(text: &str, inventory: SenseInventory, origin: &Path) -> Result<Corpus> {
    let mut instances = Vec::new();
    for (lineno, record) in parse_records(text, origin)? {
        let inst = record.to_instance()?;
        validate_labelled(&inst, &inventory).map_err(|e| Error::Line {
            path: origin.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        instances.push(inst);
    }
    Corpus::from_instances(instances, inventory)
}

pub fn load_corpus(path: impl AsRef<Path>, inventory: SenseInventory) -> Result<Corpus> {
    let path = path.as_ref();
    parse_corpus(&read(path)?, inventory, path)
}

/// Parses instances whose sense label is optional (prediction input).
pub fn parse_instances(text: &str, origin: &Path) -> Result<Vec<Instance>> {
    parse_records(text, origin)?
        .into_iter()
        .map(|(_, r)| r.to_instance())
        .collect()
}

pub fn load_instances(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    parse_instances(&read(path)?, path)
}

/// Canonical JSONL: tasks in word order, instances in file order, sorted keys.
pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let refs: Vec<&Instance> = corpus.instances().collect();
    write(path.as_ref(), &instances_to_jsonl(refs))
}

pub fn write_instances<'a>(
    instances: impl IntoIterator<Item = &'a Instance>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write(path.as_ref(), &instances_to_jsonl(instances))
}

pub(crate) fn instances_to_jsonl<'a>(instances: impl IntoIterator<Item = &'a Instance>) -> String {
    let mut out = String::new();
    for inst in instances {
        out.push_str(&InstanceRecord::from_instance(inst, None).to_canonical_json());
        out.push('\n');
    }
    out
}

/// Parses a gold file: corpus lines with a required `sense` and `dataset`.
pub fn parse_gold(text: &str, origin: &Path) -> Result<Vec<GoldInstance>> {
    let mut out = Vec::new();
    for (lineno, record) in parse_records(text, origin)? {
        let line_err = |message: &str| Error::Line {
            path: origin.to_path_buf(),
            line: lineno,
            message: message.to_string(),
        };
        if record.sense.is_none() {
            return Err(line_err("gold record without \"sense\""));
        }
        let dataset = record
            .dataset
            .clone()
            .ok_or_else(|| line_err("gold record without \"dataset\""))?;
        out.push(GoldInstance {
            instance: record.to_instance()?,
            dataset,
        });
    }
    Ok(out)
}

pub fn load_gold(path: impl AsRef<Path>) -> Result<Vec<GoldInstance>> {
    let path = path.as_ref();
    parse_gold(&read(path)?, path)
}

pub fn write_gold(gold: &[GoldInstance], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for g in gold {
        out.push_str(&InstanceRecord::from_instance(&g.instance, Some(&g.dataset)).to_canonical_json());
        out.push('\n');
    }
    write(path.as_ref(), &out)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InventoryFile {
    senses: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    glosses: BTreeMap<String, String>,
}

pub fn parse_inventory(text: &str) -> Result<SenseInventory> {
    let file: InventoryFile = serde_json::from_str(text)
        .map_err(|e| Error::validation(format!("malformed inventory: {e}")))?;
    let mut senses = BTreeMap::new();
    for (key, list) in file.senses {
        let word: WordKey = key.parse()?;
        let list = list.into_iter().map(SenseId::new).collect::<Result<Vec<_>>>()?;
        senses.insert(word, list);
    }
    let mut glosses = BTreeMap::new();
    for (sense, text) in file.glosses {
        let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        glosses.insert(SenseId::new(sense)?, tokens);
    }
    SenseInventory::new(senses, glosses)
}

pub fn load_inventory(path: impl AsRef<Path>) -> Result<SenseInventory> {
    let path = path.as_ref();
    parse_inventory(&read(path)?).map_err(|e| match e {
        Error::Validation(msg) => Error::validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_inventory(inventory: &SenseInventory, path: impl AsRef<Path>) -> Result<()> {
    let file = InventoryFile {
        senses: inventory
            .words()
            .map(|(w, l)| (w.to_string(), l.iter().map(|s| s.as_str().to_string()).collect()))
            .collect(),
        glosses: inventory
            .glosses()
            .iter()
            .map(|(s, g)| (s.as_str().to_string(), g.join(" ")))
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file).expect("inventory serializes");
    write(path.as_ref(), &(text + "\n"))
}
