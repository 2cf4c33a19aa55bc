use std::collections::BTreeMap;

use serde::Serialize;

use super::{Corpus, SenseId, WordKey};

pub const DEFAULT_FREQ_THRESHOLD: usize = 10;

/// Long-tail statistics of a training corpus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub freq_threshold: usize,
    pub total_instances: usize,
    pub word_counts: BTreeMap<WordKey, usize>,
    pub sense_counts: BTreeMap<WordKey, BTreeMap<SenseId, usize>>,
    /// Words with fewer than `freq_threshold` examples.
    pub words_below_threshold: usize,
    pub fraction_below_threshold: f64,
    /// Per-word share of examples carrying the word's most frequent sense,
    /// over words with at least `freq_threshold` examples and more than one
    /// inventory sense.
    pub mfs_share_by_word: BTreeMap<WordKey, f64>,
    /// Pooled MFS share over the same words (MFS examples / all their examples).
    pub mfs_share: f64,
    /// False when no word qualified; `mfs_share` is then reported as 0.
    pub mfs_share_defined: bool,
}

pub fn corpus_stats(corpus: &Corpus, freq_threshold: usize) -> CorpusStats {
    let mut word_counts = BTreeMap::new();
    let mut sense_counts = BTreeMap::new();
    let mut mfs_share_by_word = BTreeMap::new();
    let mut mfs_hits = 0usize;
    let mut mfs_pool = 0usize;

    for (word, task) in corpus.tasks() {
        let n = task.len();
        word_counts.insert(word.clone(), n);
        let counts: BTreeMap<SenseId, usize> = task
            .sense_counts()
            .into_iter()
            .map(|(s, c)| (s.clone(), c))
            .collect();

        let single_sense = corpus.inventory().senses(word).is_none_or(|l| l.len() < 2);
        if n >= freq_threshold && !single_sense {
            let top = task
                .most_frequent_sense()
                .map_or(0, |s| counts.get(s).copied().unwrap_or(0));
            mfs_share_by_word.insert(word.clone(), top as f64 / n as f64);
            mfs_hits += top;
            mfs_pool += n;
        }
        sense_counts.insert(word.clone(), counts);
    }

    let words_below_threshold = word_counts.values().filter(|&&n| n < freq_threshold).count();
    let fraction_below_threshold = if word_counts.is_empty() {
        0.0
    } else {
        words_below_threshold as f64 / word_counts.len() as f64
    };
    let mfs_share_defined = mfs_pool > 0;
    CorpusStats {
        freq_threshold,
        total_instances: corpus.len(),
        word_counts,
        sense_counts,
        words_below_threshold,
        fraction_below_threshold,
        mfs_share: if mfs_share_defined {
            mfs_hits as f64 / mfs_pool as f64
        } else {
            0.0
        },
        mfs_share_by_word,
        mfs_share_defined,
    }
}

impl CorpusStats {
    /// Plain-text summary table.
    pub fn render(&self) -> String {
        let mut hist: BTreeMap<&str, usize> = BTreeMap::new();
        for &n in self.word_counts.values() {
            let label = match n {
                0 => "0",
                1 => "1",
                2..=4 => "2-4",
                5..=9 => "5-9",
                10..=49 => "10-49",
                50..=99 => "50-99",
                _ => "100+",
            };
            *hist.entry(label).or_default() += 1;
        }
        let mut out = String::new();
        out.push_str(&format!("{:<34}{:>10}\n", "words", self.word_counts.len()));
        out.push_str(&format!("{:<34}{:>10}\n", "instances", self.total_instances));
        out.push_str(&format!(
            "{:<34}{:>10}\n",
            format!("words with < {} examples", self.freq_threshold),
            self.words_below_threshold
        ));
        out.push_str(&format!(
            "{:<34}{:>10.4}\n",
            format!("fraction with < {} examples", self.freq_threshold),
            self.fraction_below_threshold
        ));
        let mfs = if self.mfs_share_defined {
            format!("{:.4}", self.mfs_share)
        } else {
            "0 (no eligible words)".to_string()
        };
        out.push_str(&format!("{:<34}{:>10}\n", "MFS share (multi-sense, >= thr)", mfs));
        out.push_str("\nexamples per word\n");
        for label in ["1", "2-4", "5-9", "10-49", "50-99", "100+"] {
            out.push_str(&format!(
                "  {:<8}{:>8}\n",
                label,
                hist.get(label).copied().unwrap_or(0)
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_util::*;
    use crate::corpus::{generate_fixture, FixtureConfig};

    #[test]
    fn per_word_mfs_share_is_a_direct_count() {
        let inv = inventory(&[("a|n", &["s1", "s2", "s3"])]);
        let mut insts = Vec::new();
        for i in 0..12 {
            let sense = if i < 9 { "s1" } else if i < 11 { "s2" } else { "s3" };
            insts.push(inst(&i.to_string(), "a|n", Some(sense), &["a"], 0));
        }
        let corpus = Corpus::from_instances(insts, inv).unwrap();
        let stats = corpus_stats(&corpus, 10);
        assert_eq!(stats.mfs_share_by_word[&wk("a|n")], 9.0 / 12.0);
        assert_eq!(stats.mfs_share, 9.0 / 12.0);
        assert!(stats.mfs_share_defined);
        let per_sense: usize = stats.sense_counts[&wk("a|n")].values().sum();
        assert_eq!(per_sense, 12);
    }

    #[test]
    fn single_sense_words_leave_mfs_share_undefined() {
        let fx = generate_fixture(&FixtureConfig {
            seed: 3,
            n_words: 20,
            senses_per_word: (1, 1),
            ..FixtureConfig::default()
        })
        .unwrap();
        let stats = corpus_stats(&fx.train, 10);
        assert!(!stats.mfs_share_defined);
        assert_eq!(stats.mfs_share, 0.0);
    }

    #[test]
    fn empty_corpus_yields_zeros() {
        let corpus = Corpus::from_instances(vec![], inventory(&[("a|n", &["s"])])).unwrap();
        let stats = corpus_stats(&corpus, 10);
        assert_eq!(stats.total_instances, 0);
        assert_eq!(stats.fraction_below_threshold, 0.0);
        assert!(!stats.mfs_share_defined);
    }

    #[test]
    fn fixture_long_tail_fraction_matches_brute_force_count() {
        let fx = generate_fixture(&FixtureConfig {
            seed: 11,
            n_words: 50,
            ..FixtureConfig::default()
        })
        .unwrap();
        // Independent count straight from the instance stream.
        let mut per_word: BTreeMap<String, usize> = BTreeMap::new();
        for inst in fx.train.instances() {
            *per_word.entry(inst.word.to_string()).or_default() += 1;
        }
        let below = per_word.values().filter(|&&n| n < 10).count();
        let stats = corpus_stats(&fx.train, 10);
        assert_eq!(stats.words_below_threshold, below);
        assert_eq!(stats.fraction_below_threshold, below as f64 / per_word.len() as f64);
        let total: usize = stats.word_counts.values().sum();
        assert_eq!(total, fx.train.len());
    }

    #[test]
    fn threshold_changes_the_fraction() {
        let fx = generate_fixture(&FixtureConfig {
            seed: 5,
            n_words: 60,
            ..FixtureConfig::default()
        })
        .unwrap();
        let low = corpus_stats(&fx.train, 2);
        let high = corpus_stats(&fx.train, 50);
        assert!(low.fraction_below_threshold < high.fraction_below_threshold);
        for s in [&low, &high] {
            assert!((0.0..=1.0).contains(&s.fraction_below_threshold));
            assert!((0.0..=1.0).contains(&s.mfs_share));
        }
    }
}
