//! Prototype scoring head.
//!
//! A sense prototype is the mean encoding of its support examples. A query is
//! scored against every prototype and the scores go through a softmax. The
//! training loss is the mean negative log-likelihood of the gold sense over
//! the episode's retained queries, differentiated end to end: through the
//! query encodings, through the prototypes into the support encodings, and
//! (for gloss scoring) through the gloss encoder.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{SenseId, SenseInventory};
use crate::encoder::{ContextEncoder, ContextVector, GradBuffer};
use crate::error::{Error, Result};
use crate::sampler::Episode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ScoreFn {
    #[default]
    #[serde(rename = "dot")]
    Dot,
    #[serde(rename = "neg_sq_l2")]
    NegSqL2,
}

impl std::str::FromStr for ScoreFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(ScoreFn::Dot),
            "neg_sq_l2" => Ok(ScoreFn::NegSqL2),
            other => Err(Error::config(format!(
                "unknown score_fn {other:?} (expected dot or neg_sq_l2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub sense: SenseId,
    pub vector: Vec<f64>,
    pub support_count: usize,
}

/// Probability per sense.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SenseDistribution(pub BTreeMap<SenseId, f64>);

impl SenseDistribution {
    /// Most probable sense; ties go to the lexicographically smallest id.
    pub fn argmax(&self) -> Option<&SenseId> {
        let mut best: Option<(&SenseId, f64)> = None;
        for (s, &p) in &self.0 {
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((s, p));
            }
        }
        best.map(|(s, _)| s)
    }

    pub fn get(&self, sense: &SenseId) -> f64 {
        self.0.get(sense).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }
}

/// One prototype per distinct sense, in ascending sense order.
pub fn compute_prototypes<V: AsRef<[f64]>>(support: &[(V, &SenseId)]) -> Result<Vec<Prototype>> {
    let Some((first, _)) = support.first() else {
        return Err(Error::validation("cannot build prototypes from an empty support set"));
    };
    let d = first.as_ref().len();
    let mut sums: BTreeMap<&SenseId, (Vec<f64>, usize)> = BTreeMap::new();
    for (v, sense) in support {
        let v = v.as_ref();
        if v.len() != d {
            return Err(Error::Shape(format!("support vectors of length {d} and {}", v.len())));
        }
        let (acc, n) = sums.entry(*sense).or_insert_with(|| (vec![0.0; d], 0));
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
        *n += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(sense, (sum, n))| Prototype {
            sense: sense.clone(),
            vector: sum.into_iter().map(|x| x / n as f64).collect(),
            support_count: n,
        })
        .collect())
}

pub fn score(proto: &[f64], query: &[f64], f: ScoreFn) -> Result<f64> {
    if proto.len() != query.len() {
        return Err(Error::Shape(format!(
            "scoring vectors of length {} and {}",
            proto.len(),
            query.len()
        )));
    }
    Ok(score_unchecked(proto, query, f))
}

fn score_unchecked(p: &[f64], q: &[f64], f: ScoreFn) -> f64 {
    match f {
        ScoreFn::Dot => p.iter().zip(q).map(|(a, b)| a * b).sum(),
        ScoreFn::NegSqL2 => -p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
    }
}

/// Squared euclidean distance.
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Softmax with the maximum subtracted first; identical in exact arithmetic.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

fn distribution(senses: impl IntoIterator<Item = SenseId>, scores: &[f64]) -> SenseDistribution {
    SenseDistribution(senses.into_iter().zip(softmax(scores)).collect())
}

pub fn class_probabilities(prototypes: &[Prototype], query: &[f64], f: ScoreFn) -> Result<SenseDistribution> {
    if prototypes.is_empty() {
        return Err(Error::validation("no prototypes to score against"));
    }
    let scores = prototypes
        .iter()
        .map(|p| score(&p.vector, query, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(distribution(prototypes.iter().map(|p| p.sense.clone()), &scores))
}

/// `-d(c, q) - d(g, q)` with `d` the squared euclidean distance and `g` the
/// projected gloss vector; without a gloss only the prototype term remains.
pub fn gloss_combined_score(proto: &[f64], gloss: Option<&[f64]>, query: &[f64]) -> Result<f64> {
    if proto.len() != query.len() || gloss.is_some_and(|g| g.len() != query.len()) {
        return Err(Error::Shape("gloss-combined score on vectors of different length".into()));
    }
    let mut s = -sq_dist(proto, query);
    if let Some(g) = gloss {
        s -= sq_dist(g, query);
    }
    Ok(s)
}

/// Gloss-combined probabilities. `glosses[j]` is the projected gloss of
/// `prototypes[j]`'s sense, if the inventory has one.
pub fn gloss_class_probabilities(
    prototypes: &[Prototype],
    glosses: &[Option<ContextVector>],
    query: &[f64],
) -> Result<SenseDistribution> {
    if prototypes.is_empty() || prototypes.len() != glosses.len() {
        return Err(Error::validation("need one (optional) gloss per prototype"));
    }
    let scores = prototypes
        .iter()
        .zip(glosses)
        .map(|(p, g)| gloss_combined_score(&p.vector, g.as_deref(), query))
        .collect::<Result<Vec<_>>>()?;
    Ok(distribution(prototypes.iter().map(|p| p.sense.clone()), &scores))
}

/// Scores one support/query pair.
pub trait PairScorer {
    fn score_pair(&self, support: &[f64], query: &[f64]) -> f64;
}

/// `s(x, x') = f(x)^T M f(x')` over separately encoded pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearPairScorer {
    pub dim: usize,
    /// `dim x dim`, row-major.
    pub matrix: Vec<f64>,
}

impl BilinearPairScorer {
    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        BilinearPairScorer { dim, matrix }
    }
}

impl PairScorer for BilinearPairScorer {
    fn score_pair(&self, support: &[f64], query: &[f64]) -> f64 {
        let d = self.dim;
        (0..d)
            .map(|r| support[r] * (0..d).map(|c| self.matrix[r * d + c] * query[c]).sum::<f64>())
            .sum()
    }
}

/// Averages pair scores within each sense.
pub fn cross_encoder_sense_scores(pair_scores: &BTreeMap<SenseId, Vec<f64>>) -> Result<BTreeMap<SenseId, f64>> {
    pair_scores
        .iter()
        .map(|(sense, scores)| {
            if scores.is_empty() {
                return Err(Error::validation(format!("sense {sense} has no pair scores")));
            }
            Ok((sense.clone(), scores.iter().sum::<f64>() / scores.len() as f64))
        })
        .collect()
}

/// Pair-scores a query against every support, averages per sense, softmax.
pub fn cross_encoder_distribution<V: AsRef<[f64]>>(
    scorer: &dyn PairScorer,
    support: &[(V, &SenseId)],
    query: &[f64],
) -> Result<SenseDistribution> {
    let mut grouped: BTreeMap<SenseId, Vec<f64>> = BTreeMap::new();
    for (v, sense) in support {
        grouped
            .entry((*sense).clone())
            .or_default()
            .push(scorer.score_pair(v.as_ref(), query));
    }
    if grouped.is_empty() {
        return Err(Error::validation("empty support set"));
    }
    let r = cross_encoder_sense_scores(&grouped)?;
    let scores: Vec<f64> = r.values().copied().collect();
    Ok(distribution(r.into_keys(), &scores))
}

#[derive(Debug, Clone, Copy)]
pub struct LossOptions<'a> {
    pub score_fn: ScoreFn,
    /// Score with `-d(c, q) - d(W g, q)` using these glosses.
    pub glosses: Option<&'a SenseInventory>,
    /// Encode supports and queries on this pool. Backward stays serial, so
    /// results are bit-identical to the serial path.
    pub pool: Option<&'a rayon::ThreadPool>,
}

impl LossOptions<'_> {
    pub fn new(score_fn: ScoreFn) -> Self {
        LossOptions {
            score_fn,
            glosses: None,
            pool: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeLoss {
    pub loss: f64,
    pub grads: GradBuffer,
    pub retained_queries: usize,
    pub dropped_queries: usize,
}

pub fn episode_loss<E: ContextEncoder + Sync>(episode: &Episode<'_>, model: &E, f: ScoreFn) -> Result<EpisodeLoss> {
    episode_loss_with(episode, model, &LossOptions::new(f))
}

pub fn episode_loss_with<E: ContextEncoder + Sync>(
    episode: &Episode<'_>,
    model: &E,
    opts: &LossOptions<'_>,
) -> Result<EpisodeLoss> {
    let queries = episode.retained_queries();
    let dropped = episode.query.len() - queries.len();
    if queries.is_empty() {
        return Err(Error::Sampling(format!(
            "episode for {} has no query whose sense appears in the support set",
            episode.word
        )));
    }
    let d = model.dim();

    let encode_all = |items: &[&crate::corpus::Instance]| -> Vec<ContextVector> {
        match opts.pool {
            Some(pool) => pool.install(|| items.par_iter().map(|i| model.encode(i)).collect()),
            None => items.iter().map(|i| model.encode(i)).collect(),
        }
    };
    let support_vecs = encode_all(&episode.support);
    let query_vecs = encode_all(&queries);

    let labelled: Vec<(&[f64], &SenseId)> = support_vecs
        .iter()
        .zip(&episode.support)
        .map(|(v, i)| (v.as_slice(), i.gold_sense()))
        .collect();
    let prototypes = compute_prototypes(&labelled)?;
    let index: BTreeMap<&SenseId, usize> = prototypes.iter().enumerate().map(|(j, p)| (&p.sense, j)).collect();

    let glosses: Vec<Option<(ContextVector, &[String])>> = match opts.glosses {
        Some(inv) => prototypes
            .iter()
            .map(|p| match inv.gloss(&p.sense) {
                Some(g) => model.encode_gloss(g).map(|v| Some((v, g))),
                None => {
                    log::debug!("no gloss for {}; prototype term only", p.sense);
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?,
        None => vec![None; prototypes.len()],
    };
    let gloss_mode = opts.glosses.is_some();

    let m = queries.len() as f64;
    let mut loss = 0.0;
    let mut d_protos = vec![vec![0.0; d]; prototypes.len()];
    let mut d_glosses = vec![vec![0.0; d]; prototypes.len()];
    let mut d_queries = vec![vec![0.0; d]; queries.len()];

    for (qi, (q, inst)) in query_vecs.iter().zip(&queries).enumerate() {
        let gold = index[inst.gold_sense()];
        let scores: Vec<f64> = prototypes
            .iter()
            .zip(&glosses)
            .map(|(p, g)| {
                if gloss_mode {
                    let mut s = -sq_dist(&p.vector, q);
                    if let Some((gv, _)) = g {
                        s -= sq_dist(gv, q);
                    }
                    s
                } else {
                    score_unchecked(&p.vector, q, opts.score_fn)
                }
            })
            .collect();
        loss += log_sum_exp(&scores) - scores[gold];
        let probs = softmax(&scores);
        for (j, p) in probs.iter().enumerate() {
            let dz = (p - if j == gold { 1.0 } else { 0.0 }) / m;
            if dz == 0.0 {
                continue;
            }
            let c = &prototypes[j].vector;
            let dq = &mut d_queries[qi];
            if gloss_mode {
                for k in 0..d {
                    d_protos[j][k] += dz * -2.0 * (c[k] - q[k]);
                    dq[k] += dz * 2.0 * (c[k] - q[k]);
                }
                if let Some((gv, _)) = &glosses[j] {
                    for k in 0..d {
                        d_glosses[j][k] += dz * -2.0 * (gv[k] - q[k]);
                        dq[k] += dz * 2.0 * (gv[k] - q[k]);
                    }
                }
            } else {
                match opts.score_fn {
                    ScoreFn::Dot => {
                        for k in 0..d {
                            d_protos[j][k] += dz * q[k];
                            dq[k] += dz * c[k];
                        }
                    }
                    ScoreFn::NegSqL2 => {
                        for k in 0..d {
                            d_protos[j][k] += dz * -2.0 * (c[k] - q[k]);
                            dq[k] += dz * 2.0 * (c[k] - q[k]);
                        }
                    }
                }
            }
        }
    }
    loss /= m;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite episode loss for {}", episode.word)));
    }

    let mut grads = model.zero_grads();
    for inst in &episode.support {
        let j = index[inst.gold_sense()];
        let scale = 1.0 / prototypes[j].support_count as f64;
        let upstream: Vec<f64> = d_protos[j].iter().map(|g| g * scale).collect();
        model.backward(inst, &upstream, &mut grads)?;
    }
    for (inst, dq) in queries.iter().zip(&d_queries) {
        model.backward(inst, dq, &mut grads)?;
    }
    for (g, dg) in glosses.iter().zip(&d_glosses) {
        if let Some((_, tokens)) = g {
            model.backward_gloss(tokens, dg, &mut grads)?;
        }
    }

    Ok(EpisodeLoss {
        loss,
        grads,
        retained_queries: queries.len(),
        dropped_queries: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_util::*;
    use crate::encoder::{EncoderConfig, EncoderModel};
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn prototype_of_single_support_is_itself() {
        let a = sid("a");
        let protos = compute_prototypes(&[(vec![1.0, 2.0], &a)]).unwrap();
        assert_eq!(protos[0].vector, vec![1.0, 2.0]);
        assert_eq!(protos[0].support_count, 1);
    }

    #[test]
    fn prototype_is_mean() {
        let a = sid("a");
        let protos = compute_prototypes(&[(vec![1.0, 0.0], &a), (vec![0.0, 1.0], &a)]).unwrap();
        assert_eq!(protos[0].vector, vec![0.5, 0.5]);
        let empty: Vec<(Vec<f64>, &SenseId)> = vec![];
        assert!(compute_prototypes(&empty).is_err());
    }

    #[test]
    fn prototypes_match_a_separate_per_sense_loop() {
        let mut rng = rng::seeded(4);
        let senses = [sid("x"), sid("y"), sid("z")];
        let support: Vec<(Vec<f64>, &SenseId)> = (0..12)
            .map(|i| ((0..5).map(|_| rng.random_range(-1.0..1.0)).collect(), &senses[i % 3]))
            .collect();
        let protos = compute_prototypes(&support).unwrap();
        for p in &protos {
            let members: Vec<&Vec<f64>> = support.iter().filter(|(_, s)| **s == p.sense).map(|(v, _)| v).collect();
            for k in 0..5 {
                let mean = members.iter().map(|v| v[k]).sum::<f64>() / members.len() as f64;
                assert!((p.vector[k] - mean).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn scoring_functions() {
        assert_eq!(score(&[1.0, 2.0], &[3.0, 4.0], ScoreFn::Dot).unwrap(), 11.0);
        assert_eq!(score(&[1.0, 2.0], &[1.0, 2.0], ScoreFn::NegSqL2).unwrap(), 0.0);
        assert!(score(&[1.0, 2.0], &[1.0, 2.5], ScoreFn::NegSqL2).unwrap() < 0.0);
        assert!(score(&[1.0], &[1.0, 2.0], ScoreFn::Dot).is_err());
    }

    #[test]
    fn argmax_agrees_across_score_fns_for_equal_norm_prototypes() {
        let mut rng = rng::seeded(8);
        for _ in 0..200 {
            let protos: Vec<Prototype> = (0..4)
                .map(|j| {
                    let v: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    Prototype {
                        sense: sid(&format!("s{j}")),
                        vector: v.into_iter().map(|x| x / n).collect(),
                        support_count: 1,
                    }
                })
                .collect();
            let q: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = class_probabilities(&protos, &q, ScoreFn::Dot).unwrap();
            let b = class_probabilities(&protos, &q, ScoreFn::NegSqL2).unwrap();
            assert_eq!(a.argmax(), b.argmax());
        }
    }

    #[test]
    fn softmax_examples() {
        let one = vec![Prototype {
            sense: sid("a"),
            vector: vec![3.0, 1.0],
            support_count: 2,
        }];
        let p = class_probabilities(&one, &[1.0, 1.0], ScoreFn::Dot).unwrap();
        assert_eq!(p.get(&sid("a")), 1.0);

        let p = softmax(&[0.7, 0.7]);
        assert_eq!(p, vec![0.5, 0.5]);

        let p = softmax(&[1.0, 0.0]);
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((p[0] - 0.73106).abs() < 1e-5);
        assert!((p[1] - 0.26894).abs() < 1e-5);

        let big = softmax(&[1000.0, 999.0]);
        assert!((big[0] - e / (e + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn ties_break_to_smallest_sense() {
        let dist = SenseDistribution([(sid("b"), 0.5), (sid("a"), 0.5)].into_iter().collect());
        assert_eq!(dist.argmax(), Some(&sid("a")));
    }

    #[test]
    fn cross_encoder_aggregation() {
        let mut groups = BTreeMap::new();
        groups.insert(sid("a"), vec![1.0, 3.0]);
        groups.insert(sid("b"), vec![-0.5]);
        let r = cross_encoder_sense_scores(&groups).unwrap();
        assert_eq!(r[&sid("a")], 2.0);
        assert_eq!(r[&sid("b")], -0.5);
        groups.insert(sid("c"), vec![]);
        assert!(cross_encoder_sense_scores(&groups).is_err());
    }

    #[test]
    fn gloss_combined_examples() {
        let c = [0.5, -1.0];
        assert_eq!(gloss_combined_score(&c, Some(&c), &c).unwrap(), 0.0);
        let q = [1.0, 1.0];
        assert_eq!(gloss_combined_score(&c, None, &q).unwrap(), -sq_dist(&c, &q));
        let g = [2.0, 0.0];
        let expected = -(0.25 + 4.0) - (1.0 + 1.0);
        assert_eq!(gloss_combined_score(&c, Some(&g), &q).unwrap(), expected);
    }

    fn toy_task(n_per_sense: &[usize]) -> (crate::corpus::WordTask, Vec<String>) {
        let words = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"];
        let mut instances = Vec::new();
        let mut k = 0;
        let mut names = Vec::new();
        for (j, &n) in n_per_sense.iter().enumerate() {
            let sense = format!("s{j}");
            names.push(sense.clone());
            for _ in 0..n {
                let toks = ["w", words[(j * 3 + k) % 8], words[(j + k) % 8]];
                instances.push(inst(&format!("i{k}"), "w|n", Some(&sense), &toks, 0));
                k += 1;
            }
        }
        (
            crate::corpus::WordTask {
                word: wk("w|n"),
                instances,
            },
            names,
        )
    }

    #[test]
    fn equal_scores_give_ln_j() {
        // A zero projection and bias makes every encoding (and score) zero.
        let mut model = EncoderModel::init(EncoderConfig {
            embedding_dim: 4,
            hash_buckets: 16,
            ..EncoderConfig::default()
        })
        .unwrap();
        model.theta.projection.iter_mut().for_each(|x| *x = 0.0);
        let (task, _) = toy_task(&[3, 3, 3]);
        let ep = Episode {
            word: task.word.clone(),
            support: vec![&task.instances[0], &task.instances[3], &task.instances[6]],
            query: vec![&task.instances[1], &task.instances[4], &task.instances[8]],
        };
        for f in [ScoreFn::Dot, ScoreFn::NegSqL2] {
            let out = episode_loss(&ep, &model, f).unwrap();
            assert!((out.loss - 3f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn episode_without_retained_queries_errors() {
        let model = EncoderModel::init(EncoderConfig {
            embedding_dim: 4,
            hash_buckets: 16,
            ..EncoderConfig::default()
        })
        .unwrap();
        let (task, _) = toy_task(&[2, 2]);
        let ep = Episode {
            word: task.word.clone(),
            support: vec![&task.instances[0]],
            query: vec![&task.instances[2]],
        };
        assert!(episode_loss(&ep, &model, ScoreFn::Dot).is_err());
    }

    #[test]
    fn parallel_encoding_is_bit_identical() {
        let model = EncoderModel::init(EncoderConfig {
            embedding_dim: 8,
            hash_buckets: 64,
            ..EncoderConfig::default()
        })
        .unwrap();
        let (task, _) = toy_task(&[4, 5, 3]);
        let ep = Episode {
            word: task.word.clone(),
            support: task.instances.iter().step_by(2).collect(),
            query: task.instances.iter().skip(1).step_by(2).collect(),
        };
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let serial = episode_loss(&ep, &model, ScoreFn::Dot).unwrap();
        let opts = LossOptions {
            pool: Some(&pool),
            ..LossOptions::new(ScoreFn::Dot)
        };
        let parallel = episode_loss_with(&ep, &model, &opts).unwrap();
        assert_eq!(serial.loss.to_bits(), parallel.loss.to_bits());
        assert_eq!(serial.grads, parallel.grads);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            scores in proptest::collection::vec(-50.0f64..50.0, 1..8),
            shift in -100.0f64..100.0,
        ) {
            let p = softmax(&scores);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            for (a, b) in p.iter().zip(softmax(&shifted)) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn prototypes_scale_linearly(lambda in -5.0f64..5.0, seed in any::<u64>()) {
            let mut rng = rng::seeded(seed);
            let senses = [sid("a"), sid("b")];
            let support: Vec<(Vec<f64>, &SenseId)> = (0..6)
                .map(|i| ((0..3).map(|_| rng.random_range(-1.0..1.0)).collect(), &senses[i % 2]))
                .collect();
            let scaled: Vec<(Vec<f64>, &SenseId)> = support
                .iter()
                .map(|(v, s)| (v.iter().map(|x| x * lambda).collect(), *s))
                .collect();
            let a = compute_prototypes(&support).unwrap();
            let b = compute_prototypes(&scaled).unwrap();
            for (pa, pb) in a.iter().zip(&b) {
                for (x, y) in pa.vector.iter().zip(&pb.vector) {
                    prop_assert!((x * lambda - y).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn neg_sq_l2_is_translation_invariant(seed in any::<u64>()) {
            let mut rng = rng::seeded(seed);
            let mut v = || -> Vec<f64> { (0..4).map(|_| rng.random_range(-2.0..2.0)).collect() };
            let (p, q, u) = (v(), v(), v());
            let pt: Vec<f64> = p.iter().zip(&u).map(|(a, b)| a + b).collect();
            let qt: Vec<f64> = q.iter().zip(&u).map(|(a, b)| a + b).collect();
            let s1 = score(&p, &q, ScoreFn::NegSqL2).unwrap();
            let s2 = score(&pt, &qt, ScoreFn::NegSqL2).unwrap();
            prop_assert!((s1 - s2).abs() < 1e-9);
        }

        #[test]
        fn cross_encoder_ignores_support_order(seed in any::<u64>()) {
            let mut rng = rng::seeded(seed);
            let scores: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut rev = scores.clone();
            rev.reverse();
            let a = cross_encoder_sense_scores(&[(sid("s"), scores)].into_iter().collect()).unwrap();
            let b = cross_encoder_sense_scores(&[(sid("s"), rev)].into_iter().collect()).unwrap();
            prop_assert!((a[&sid("s")] - b[&sid("s")]).abs() < 1e-12);
        }
    }
}
