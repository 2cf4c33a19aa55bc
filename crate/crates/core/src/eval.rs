//! Scoring predictions against gold labels.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, GoldInstance, Pos, SenseId};
use crate::error::{Error, Result};
use crate::inference::Prediction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub correct: usize,
    pub attempted: usize,
    pub total: usize,
}

impl Prf {
    pub fn from_counts(correct: usize, attempted: usize, total: usize) -> Self {
        let precision = if attempted == 0 { 0.0 } else { correct as f64 / attempted as f64 };
        let recall = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        // Equal P and R are returned as-is so P = R = F1 holds exactly.
        let f1 = if precision == recall {
            precision
        } else if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
            correct,
            attempted,
            total,
        }
    }
}

/// Predicted sense per instance id. Rejects duplicate predictions and ids
/// missing from `gold`.
fn index_predictions<'a>(preds: &'a [Prediction], gold: &[GoldInstance]) -> Result<HashMap<&'a str, &'a SenseId>> {
    let gold_ids: std::collections::HashSet<&str> = gold.iter().map(|g| g.instance.id.as_str()).collect();
    let mut out = HashMap::with_capacity(preds.len());
    for p in preds {
        if !gold_ids.contains(p.id.as_str()) {
            return Err(Error::validation(format!("prediction for unknown instance {}", p.id)));
        }
        if out.insert(p.id.as_str(), &p.sense).is_some() {
            return Err(Error::validation(format!("more than one prediction for {}", p.id)));
        }
    }
    Ok(out)
}

fn outcome(pred: Option<&&SenseId>, gold: &GoldInstance) -> (bool, bool) {
    match pred {
        Some(s) => (true, *s == gold.instance.gold_sense()),
        None => (false, false),
    }
}

pub fn f1(preds: &[Prediction], gold: &[GoldInstance]) -> Result<Prf> {
    let index = index_predictions(preds, gold)?;
    let correct = gold
        .iter()
        .filter(|g| outcome(index.get(g.instance.id.as_str()), g).1)
        .count();
    Ok(Prf::from_counts(correct, index.len(), gold.len()))
}

/// Count ranges given by their lower edges: `[0, 1, 11, 51]` means
/// `{0}, 1-10, 11-50, 51+`. Upper bounds are inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Buckets(Vec<usize>);

impl Default for Buckets {
    fn default() -> Self {
        Buckets(vec![0, 1, 11, 51])
    }
}

impl TryFrom<Vec<usize>> for Buckets {
    type Error = Error;

    fn try_from(edges: Vec<usize>) -> Result<Self> {
        Buckets::new(edges)
    }
}

impl From<Buckets> for Vec<usize> {
    fn from(b: Buckets) -> Self {
        b.0
    }
}

impl Buckets {
    pub fn new(edges: Vec<usize>) -> Result<Self> {
        if edges.first() != Some(&0) {
            return Err(Error::config("bucket edges must start at 0"));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("bucket edges must be strictly increasing"));
        }
        Ok(Buckets(edges))
    }

    pub fn edges(&self) -> &[usize] {
        &self.0
    }

    pub fn index(&self, count: usize) -> usize {
        self.0.partition_point(|&lo| lo <= count) - 1
    }

    pub fn label(&self, i: usize) -> String {
        let lo = self.0[i];
        match self.0.get(i + 1) {
            None => format!("{lo}+"),
            Some(&next) if next == lo + 1 => format!("{lo}"),
            Some(&next) => format!("{lo}-{}", next - 1),
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub label: String,
    pub correct: usize,
    pub total: usize,
    /// `None` for an empty bucket.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    /// By the number of training examples of the instance's word.
    pub word_frequency: Vec<BucketRow>,
    /// By the number of training examples of the instance's gold sense.
    pub sense_frequency: Vec<BucketRow>,
}

impl Breakdown {
    /// `sum(accuracy * count) / total` over non-empty buckets, computed from
    /// the pooled counts so it matches overall accuracy bit for bit.
    pub fn weighted_accuracy(rows: &[BucketRow]) -> f64 {
        let total: usize = rows.iter().map(|r| r.total).sum();
        let correct: usize = rows.iter().map(|r| r.correct).sum();
        if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        }
    }
}

pub fn breakdown(preds: &[Prediction], gold: &[GoldInstance], train: &Corpus, buckets: &Buckets) -> Result<Breakdown> {
    let index = index_predictions(preds, gold)?;
    let mut word = vec![(0usize, 0usize); buckets.len()];
    let mut sense = vec![(0usize, 0usize); buckets.len()];
    for g in gold {
        let inst = &g.instance;
        let n_word = train.task(&inst.word).map_or(0, |t| t.len());
        let n_sense = train.sense_count(&inst.word, inst.gold_sense());
        let hit = outcome(index.get(inst.id.as_str()), g).1 as usize;
        for (table, n) in [(&mut word, n_word), (&mut sense, n_sense)] {
            let cell = &mut table[buckets.index(n)];
            cell.0 += hit;
            cell.1 += 1;
        }
    }
    let rows = |t: Vec<(usize, usize)>| -> Vec<BucketRow> {
        t.into_iter()
            .enumerate()
            .map(|(i, (correct, total))| BucketRow {
                label: buckets.label(i),
                correct,
                total,
                accuracy: (total > 0).then(|| correct as f64 / total as f64),
            })
            .collect()
    };
    Ok(Breakdown {
        word_frequency: rows(word),
        sense_frequency: rows(sense),
    })
}

/// Hex sha256 over the sorted `(id, sense, dataset)` triples.
pub fn gold_digest(gold: &[GoldInstance]) -> String {
    let mut lines: Vec<String> = gold
        .iter()
        .map(|g| format!("{}\t{}\t{}", g.instance.id, g.instance.gold_sense(), g.dataset))
        .collect();
    lines.sort();
    let mut h = Sha256::new();
    for l in lines {
        h.update(l.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub gold_digest: String,
    pub bucket_edges: Vec<usize>,
    pub note: String,
    pub all: Prf,
    pub per_pos: BTreeMap<String, Prf>,
    pub per_dataset: BTreeMap<String, Prf>,
    pub breakdown: Breakdown,
}

const BUCKET_NOTE: &str = "frequency bucket edges are configurable defaults, not fixed by any benchmark";

pub fn evaluate(preds: &[Prediction], gold: &[GoldInstance], train: &Corpus, buckets: &Buckets) -> Result<EvalReport> {
    let index = index_predictions(preds, gold)?;
    let mut per_pos: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    let mut per_dataset: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for g in gold {
        let (attempted, correct) = outcome(index.get(g.instance.id.as_str()), g);
        for cell in [
            per_pos.entry(g.instance.word.pos().tag().to_string()).or_default(),
            per_dataset.entry(g.dataset.clone()).or_default(),
        ] {
            cell.0 += correct as usize;
            cell.1 += attempted as usize;
            cell.2 += 1;
        }
    }
    let to_prf = |m: BTreeMap<String, (usize, usize, usize)>| {
        m.into_iter()
            .map(|(k, (c, a, t))| (k, Prf::from_counts(c, a, t)))
            .collect()
    };
    Ok(EvalReport {
        gold_digest: gold_digest(gold),
        bucket_edges: buckets.edges().to_vec(),
        note: BUCKET_NOTE.into(),
        all: f1(preds, gold)?,
        per_pos: to_prf(per_pos),
        per_dataset: to_prf(per_dataset),
        breakdown: breakdown(preds, gold, train, buckets)?,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Named scalar cells, in a stable order.
    pub fn cells(&self) -> Vec<(String, Option<f64>)> {
        let mut out = vec![
            ("ALL.precision".to_string(), Some(self.all.precision)),
            ("ALL.recall".to_string(), Some(self.all.recall)),
            ("ALL.f1".to_string(), Some(self.all.f1)),
        ];
        for pos in Pos::ALL {
            if let Some(p) = self.per_pos.get(pos.tag()) {
                out.push((format!("pos.{}.f1", pos.tag()), Some(p.f1)));
            }
        }
        for (d, p) in &self.per_dataset {
            out.push((format!("dataset.{d}.f1"), Some(p.f1)));
        }
        for r in &self.breakdown.word_frequency {
            out.push((format!("word_freq.{}.acc", r.label), r.accuracy));
        }
        for r in &self.breakdown.sense_frequency {
            out.push((format!("sense_freq.{}.acc", r.label), r.accuracy));
        }
        out
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {}", self.note);
        let _ = writeln!(s, "{:<16} {:>8} {:>8} {:>8} {:>7}", "subset", "P", "R", "F1", "n");
        let mut row = |name: &str, p: &Prf| {
            let _ = writeln!(
                s,
                "{:<16} {:>8.2} {:>8.2} {:>8.2} {:>7}",
                name,
                100.0 * p.precision,
                100.0 * p.recall,
                100.0 * p.f1,
                p.total
            );
        };
        for (d, p) in &self.per_dataset {
            row(d, p);
        }
        for pos in Pos::ALL {
            if let Some(p) = self.per_pos.get(pos.tag()) {
                row(&format!("pos={}", pos.tag()), p);
            }
        }
        row("ALL", &self.all);
        for (title, rows) in [
            ("word frequency", &self.breakdown.word_frequency),
            ("sense frequency", &self.breakdown.sense_frequency),
        ] {
            let _ = writeln!(s, "\n{title:<16} {:>8} {:>7}", "acc", "n");
            for r in rows {
                let acc = r.accuracy.map_or("-".to_string(), |a| format!("{:.2}", 100.0 * a));
                let _ = writeln!(s, "{:<16} {:>8} {:>7}", r.label, acc, r.total);
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffRow {
    pub cell: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// `b - a` when both are defined.
    pub delta: Option<f64>,
}

/// Per-cell differences `b - a`. Both reports must score the same gold set.
pub fn compare_reports(a: &EvalReport, b: &EvalReport) -> Result<Vec<DiffRow>> {
    if a.gold_digest != b.gold_digest {
        return Err(Error::validation("reports were computed on different gold sets"));
    }
    if a.bucket_edges != b.bucket_edges {
        return Err(Error::validation("reports use different frequency buckets"));
    }
    let bc: BTreeMap<String, Option<f64>> = b.cells().into_iter().collect();
    Ok(a.cells()
        .into_iter()
        .map(|(cell, av)| {
            let bv = bc.get(&cell).copied().flatten();
            DiffRow {
                delta: av.zip(bv).map(|(x, y)| y - x),
                a: av,
                b: bv,
                cell,
            }
        })
        .collect())
}

pub fn render_diff(rows: &[DiffRow]) -> String {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.2}", 100.0 * x));
    let mut s = format!("{:<24} {:>8} {:>8} {:>8}\n", "cell", "a", "b", "delta");
    for r in rows {
        let _ = writeln!(s, "{:<24} {:>8} {:>8} {:>8}", r.cell, fmt(r.a), fmt(r.b), fmt(r.delta));
    }
    s
}

/// One row per system: F1 per dataset and on the concatenation.
pub fn render_comparison(systems: &[(&str, &EvalReport)]) -> Result<String> {
    let Some((_, first)) = systems.first() else {
        return Ok(String::new());
    };
    for (name, r) in systems {
        if r.gold_digest != first.gold_digest {
            return Err(Error::validation(format!("{name} was scored on a different gold set")));
        }
    }
    let datasets: Vec<&String> = first.per_dataset.keys().collect();
    let mut s = format!("{:<18}", "system");
    for d in &datasets {
        let _ = write!(s, " {d:>8}");
    }
    let _ = writeln!(s, " {:>8}", "ALL");
    for (name, r) in systems {
        let _ = write!(s, "{name:<18}");
        for d in &datasets {
            let _ = write!(s, " {:>8.2}", 100.0 * r.per_dataset[*d].f1);
        }
        let _ = writeln!(s, " {:>8.2}", 100.0 * r.all.f1);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_util::*;
    use crate::corpus::GoldInstance;
    use proptest::prelude::*;

    fn gold(id: &str, word: &str, sense: &str, dataset: &str) -> GoldInstance {
        GoldInstance {
            instance: inst(id, word, Some(sense), &["w"], 0),
            dataset: dataset.into(),
        }
    }

    fn pred(id: &str, sense: &str) -> Prediction {
        Prediction {
            id: id.into(),
            sense: sid(sense),
            provenance: "test".into(),
            probs: None,
        }
    }

    fn four() -> Vec<GoldInstance> {
        vec![
            gold("1", "w|n", "a", "d1"),
            gold("2", "w|n", "b", "d1"),
            gold("3", "v|v", "c", "d2"),
            gold("4", "v|v", "d", "d2"),
        ]
    }

    #[test]
    fn f1_examples() {
        let g = four();
        let p = f1(&[pred("1", "a"), pred("2", "b"), pred("3", "c"), pred("4", "x")], &g).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (0.75, 0.75, 0.75));
        let p = f1(&[pred("1", "a"), pred("2", "b")], &g).unwrap();
        assert_eq!(p.precision, 1.0);
        assert_eq!(p.recall, 0.5);
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-15);
        let p = f1(&[], &g).unwrap();
        assert_eq!((p.precision, p.f1), (0.0, 0.0));
        assert!(f1(&[pred("9", "a")], &g).is_err());
        assert!(f1(&[pred("1", "a"), pred("1", "b")], &g).is_err());
    }

    #[test]
    fn bucket_edges() {
        let b = Buckets::default();
        assert_eq!(b.index(0), 0);
        assert_eq!(b.index(1), 1);
        assert_eq!(b.index(10), 1);
        assert_eq!(b.index(11), 2);
        assert_eq!(b.index(50), 2);
        assert_eq!(b.index(51), 3);
        assert_eq!(b.index(10_000), 3);
        let labels: Vec<String> = (0..4).map(|i| b.label(i)).collect();
        assert_eq!(labels, ["0", "1-10", "11-50", "51+"]);
        assert!(Buckets::new(vec![1, 5]).is_err());
        assert!(Buckets::new(vec![0, 5, 5]).is_err());
    }

    fn train_corpus() -> Corpus {
        let inv = inventory(&[("w|n", &["a", "b"]), ("v|v", &["c", "d"])]);
        let mut instances = Vec::new();
        for k in 0..10 {
            instances.push(inst(&format!("t{k}"), "w|n", Some("a"), &["w"], 0));
        }
        instances.push(inst("tb", "w|n", Some("b"), &["w"], 0));
        Corpus::from_instances(instances, inv).unwrap()
    }

    #[test]
    fn breakdown_assigns_by_training_counts() {
        let g = four();
        let preds = [pred("1", "a"), pred("2", "a"), pred("3", "c"), pred("4", "d")];
        let b = breakdown(&preds, &g, &train_corpus(), &Buckets::default()).unwrap();
        // w|n has 11 training examples; v|v none.
        let totals: Vec<usize> = b.word_frequency.iter().map(|r| r.total).collect();
        assert_eq!(totals, [2, 0, 2, 0]);
        // Sense a: 10 examples, b: 1, c and d: 0.
        let totals: Vec<usize> = b.sense_frequency.iter().map(|r| r.total).collect();
        assert_eq!(totals, [2, 2, 0, 0]);
        assert_eq!(b.sense_frequency[1].correct, 1);
        assert_eq!(b.sense_frequency[2].accuracy, None);
    }

    #[test]
    fn report_rows_and_diffs() {
        let g = four();
        let train = train_corpus();
        let preds = [pred("1", "a"), pred("2", "b"), pred("3", "d")];
        let r = evaluate(&preds, &g, &train, &Buckets::default()).unwrap();
        assert_eq!(r.per_dataset["d1"].f1, 1.0);
        assert_eq!(r.per_dataset["d2"].correct, 0);
        assert_eq!(r.per_pos["n"].total, 2);
        assert!(r.render().contains("ALL"));
        let same = compare_reports(&r, &r).unwrap();
        assert!(same.iter().all(|d| d.delta.is_none_or(|x| x == 0.0)));

        let better = evaluate(&[pred("1", "a"), pred("2", "b"), pred("3", "c")], &g, &train, &Buckets::default()).unwrap();
        let diff = compare_reports(&r, &better).unwrap();
        let all = diff.iter().find(|d| d.cell == "ALL.recall").unwrap();
        assert!((all.delta.unwrap() - 0.25).abs() < 1e-15);
        let d2 = diff.iter().find(|d| d.cell == "dataset.d2.f1").unwrap();
        assert_eq!(d2.a, Some(0.0));
        assert!((d2.delta.unwrap() - 2.0 / 3.0).abs() < 1e-15);

        let other_gold = vec![gold("9", "w|n", "a", "d3")];
        let other = evaluate(&[], &other_gold, &train, &Buckets::default()).unwrap();
        assert!(compare_reports(&r, &other).is_err());
        let table = render_comparison(&[("x", &r), ("y", &better)]).unwrap();
        assert_eq!(table.lines().count(), 3);
    }

    proptest! {
        #[test]
        fn identities_hold_on_random_outcomes(hits in proptest::collection::vec(any::<bool>(), 1..60)) {
            let train = train_corpus();
            let words = ["w|n", "v|v"];
            let senses = [["a", "b"], ["c", "d"]];
            let mut g = Vec::new();
            let mut preds = Vec::new();
            for (i, hit) in hits.iter().enumerate() {
                let w = i % 2;
                let s = senses[w][(i / 2) % 2];
                g.push(gold(&i.to_string(), words[w], s, if i % 3 == 0 { "x" } else { "y" }));
                let guess = if *hit { s } else { senses[w][1 - (i / 2) % 2] };
                preds.push(pred(&i.to_string(), guess));
            }
            let r = evaluate(&preds, &g, &train, &Buckets::default()).unwrap();
            prop_assert_eq!(r.all.precision, r.all.recall);
            prop_assert_eq!(r.all.recall, r.all.f1);
            for rows in [&r.breakdown.word_frequency, &r.breakdown.sense_frequency] {
                prop_assert_eq!(rows.iter().map(|b| b.total).sum::<usize>(), g.len());
                prop_assert_eq!(rows.iter().map(|b| b.correct).sum::<usize>(), r.all.correct);
                prop_assert_eq!(Breakdown::weighted_accuracy(rows), r.all.recall);
            }
        }
    }
}
