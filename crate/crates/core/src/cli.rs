//! Command-line entry point.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::corpus::{self, Corpus, FixtureConfig, Instance, SenseInventory};
use crate::encoder::ContextEncoder;
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport};
use crate::inference::{
    self, build_support_bank, classifier_baseline_predict, classifier_baseline_train, knn_baseline_bank, Prediction,
    Predictor, SupportBank,
};
use crate::sampler::build_epoch;
use crate::trainer::{self, DevSet, Trainer};

#[derive(Debug, Parser)]
#[command(name = "fewshot-wsd", version, about = "Few-shot word sense disambiguation with sense prototypes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Word and sense frequency statistics of a training corpus.
    Stats {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        inventory: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Count words with fewer examples than this.
        #[arg(long)]
        threshold: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Print the episodes of one training epoch as JSON lines.
    Sample {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        inventory: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, required = true)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0)]
        epoch: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Episodic training; writes checkpoint.json and train_log.json.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        inventory: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, required = true)]
        seed: Option<u64>,
        /// Gold-labelled dev set for model selection.
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Predict senses for instances with a trained checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Support bank file; built from --corpus and saved here when absent
        /// or stale.
        #[arg(long)]
        bank: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        inventory: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, required = true)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Score predictions against gold.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        inventory: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run S1, MFS, frozen nearest-prototype and classifier baselines (and a
    /// trained checkpoint, if given) and print one comparison table.
    Baselines {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        inventory: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Directory for per-system predictions and reports.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write encoded vectors with their sense labels, one row per instance.
    DumpEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic long-tail corpus (inventory, train, dev, test).
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        words: usize,
    },
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn load_train(cfg: &RunConfig, corpus: Option<PathBuf>, inventory: Option<PathBuf>) -> Result<Corpus> {
    let inv = corpus::load_inventory(cfg.resolve_path(&cfg.inventory, inventory, "inventory")?)?;
    corpus::load_corpus(cfg.resolve_path(&cfg.corpus, corpus, "corpus")?, inv)
}

/// Runs one command, writing its report to `out`.
pub fn run(cli: Cli, out: &mut String) -> Result<()> {
    match cli.command {
        Command::Stats {
            corpus,
            inventory,
            config,
            threshold,
            json,
        } => {
            let cfg = RunConfig::load_optional(config.as_deref())?;
            let train = load_train(&cfg, corpus, inventory)?;
            let threshold = cfg
                .freq_threshold
                .or(threshold)
                .unwrap_or(corpus::DEFAULT_FREQ_THRESHOLD);
            let stats = corpus::corpus_stats(&train, threshold);
            if json {
                out.push_str(&serde_json::to_string_pretty(&stats).expect("stats serialize"));
                out.push('\n');
            } else {
                out.push_str(&stats.render());
            }
        }
        Command::Sample {
            corpus,
            inventory,
            config,
            seed,
            epoch,
            out: path,
        } => {
            let cfg = RunConfig::load_optional(config.as_deref())?;
            let seed = cfg.resolve_seed(seed)?;
            let train = load_train(&cfg, corpus, inventory)?;
            let plan = build_epoch(&train, &cfg.train_config(seed).sampling_config(), epoch)?;
            let text = plan.to_jsonl();
            match path {
                Some(p) => write_file(&p, &text)?,
                None => out.push_str(&text),
            }
        }
        Command::Train {
            corpus,
            inventory,
            config,
            seed,
            dev,
            out: dir,
            resume,
            parallel,
        } => {
            let cfg = RunConfig::load_optional(config.as_deref())?;
            let seed = cfg.resolve_seed(seed)?;
            let train = load_train(&cfg, corpus, inventory)?;
            let dev_gold = match cfg.dev.clone().or(dev) {
                Some(p) => Some(corpus::load_gold(p)?),
                None => None,
            };
            let inf = cfg.inference_config(seed);
            let mut trainer = match resume {
                Some(p) => Trainer::resume(&train, trainer::load_checkpoint(p)?.0)?,
                None => Trainer::new(&train, cfg.train_config(seed))?,
            }
            .with_threads(parallel)?;
            let dev_set = dev_gold.as_deref().map(|gold| DevSet { gold, inference: &inf });
            trainer.run(dev_set, None)?;
            create_dir(&dir)?;
            let digest = trainer::save_checkpoint(&trainer.checkpoint(), dir.join("checkpoint.json"))?;
            let mut log = serde_json::to_value(&trainer.log).expect("log serializes");
            log["wall_time_secs"] = trainer.log.wall_time_secs.into();
            let log = serde_json::to_string_pretty(&log).expect("log serializes") + "\n";
            write_file(&dir.join("train_log.json"), &log)?;
            let _ = writeln!(
                out,
                "trained {} epochs, final loss {:.5}, checkpoint {}",
                trainer.log.epochs_run(),
                trainer.log.epoch_loss.last().copied().unwrap_or(f64::NAN),
                &digest[..12]
            );
            if let Some(b) = &trainer.best {
                let _ = writeln!(out, "best dev F1 {:.4} at epoch {}", b.dev_f1, b.epoch);
            }
        }
        Command::Predict {
            checkpoint,
            bank,
            input,
            out: path,
            corpus,
            inventory,
            config,
            seed,
            parallel,
        } => {
            let cfg = RunConfig::load_optional(config.as_deref())?;
            let seed = cfg.resolve_seed(seed)?;
            let (ckpt, digest) = trainer::load_checkpoint(&checkpoint)?;
            let model = ckpt.selected_model();
            let mut inf = cfg.inference_config(seed);
            inf.score_fn = ckpt.config.score_fn;
            inf.use_glosses = ckpt.config.use_glosses;
            let inv = corpus::load_inventory(cfg.resolve_path(&cfg.inventory, inventory, "inventory")?)?;
            let cached = match bank.exists() {
                true => Some(SupportBank::load(&bank)?),
                false => None,
            }
            .filter(|b| {
                b.checkpoint_digest == digest && b.max_support_per_sense == inf.max_support_per_sense && b.seed == inf.seed
            });
            let bank = match cached {
                Some(b) => b,
                None => {
                    let train = corpus::load_corpus(cfg.resolve_path(&cfg.corpus, corpus, "corpus")?, inv.clone())?;
                    let b = build_support_bank(&train, model, &inf, &digest)?;
                    b.save(&bank)?;
                    b
                }
            };
            let instances = corpus::load_instances(&input)?;
            let predictor = Predictor::new(&bank, model, &inv, &inf)?;
            let preds = predict_with_threads(&predictor, &instances, parallel)?;
            inference::write_predictions(&preds, &path)?;
            let _ = writeln!(out, "wrote {} predictions to {}", preds.len(), path.display());
        }
        Command::Eval {
            pred,
            gold,
            corpus,
            inventory,
            config,
            report,
        } => {
            let cfg = RunConfig::load_optional(config.as_deref())?;
            let train = load_train(&cfg, corpus, inventory)?;
            let gold = corpus::load_gold(cfg.resolve_path(&cfg.gold, gold, "gold")?)?;
            let preds = inference::load_predictions(&pred)?;
            let r = eval::evaluate(&preds, &gold, &train, &cfg.buckets)?;
            if let Some(p) = report {
                write_file(&p, &r.to_json())?;
            }
            out.push_str(&r.render());
        }
        Command::Baselines {
            corpus,
            inventory,
            gold,
            config,
            seed,
            checkpoint,
            out: dir,
        } => {
            let cfg = RunConfig::load_optional(config.as_deref())?;
            let seed = cfg.resolve_seed(seed.or(Some(0)))?;
            let train = load_train(&cfg, corpus, inventory)?;
            let gold = corpus::load_gold(cfg.resolve_path(&cfg.gold, gold, "gold")?)?;
            let systems = run_baselines(&cfg, seed, &train, &gold, checkpoint.as_deref())?;
            let reports = systems
                .iter()
                .map(|(name, preds)| Ok((name.as_str(), eval::evaluate(preds, &gold, &train, &cfg.buckets)?)))
                .collect::<Result<Vec<(&str, EvalReport)>>>()?;
            if let Some(dir) = dir {
                create_dir(&dir)?;
                for ((name, preds), (_, report)) in systems.iter().zip(&reports) {
                    inference::write_predictions(preds, dir.join(format!("{name}.predictions.jsonl")))?;
                    write_file(&dir.join(format!("{name}.report.json")), &report.to_json())?;
                }
            }
            let refs: Vec<(&str, &EvalReport)> = reports.iter().map(|(n, r)| (*n, r)).collect();
            out.push_str(&eval::render_comparison(&refs)?);
        }
        Command::DumpEmbeddings {
            checkpoint,
            input,
            out: path,
        } => {
            let (ckpt, _) = trainer::load_checkpoint(&checkpoint)?;
            let instances = corpus::load_instances(&input)?;
            write_file(&path, &dump_embeddings(ckpt.selected_model(), &instances))?;
            let _ = writeln!(out, "wrote {} rows to {}", instances.len(), path.display());
        }
        Command::Fixture { out: dir, seed, words } => {
            let fx = corpus::generate_fixture(&FixtureConfig {
                seed,
                n_words: words,
                ..FixtureConfig::default()
            })?;
            create_dir(&dir)?;
            corpus::write_inventory(&fx.inventory, dir.join("inventory.json"))?;
            corpus::write_corpus(&fx.train, dir.join("train.jsonl"))?;
            corpus::write_gold(&fx.dev, dir.join("dev.jsonl"))?;
            corpus::write_gold(&fx.test, dir.join("test.jsonl"))?;
            let _ = writeln!(
                out,
                "wrote {} train, {} dev, {} test instances to {}",
                fx.train.len(),
                fx.dev.len(),
                fx.test.len(),
                dir.display()
            );
        }
    }
    Ok(())
}

fn predict_with_threads<E: ContextEncoder + Sync>(
    predictor: &Predictor<'_, E>,
    instances: &[Instance],
    threads: usize,
) -> Result<Vec<Prediction>> {
    if threads <= 1 {
        return predictor.predict_all(instances);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(format!("cannot start thread pool: {e}")))?;
    pool.install(|| instances.par_iter().map(|i| predictor.predict(i)).collect())
}

/// Predictions of every baseline, plus the trained model when a checkpoint
/// is given, in table order.
pub fn run_baselines(
    cfg: &RunConfig,
    seed: u64,
    train: &Corpus,
    gold: &[corpus::GoldInstance],
    checkpoint: Option<&Path>,
) -> Result<Vec<(String, Vec<Prediction>)>> {
    let inv: &SenseInventory = train.inventory();
    let instances: Vec<&Instance> = gold.iter().map(|g| &g.instance).collect();
    let mut systems = Vec::new();

    let s1 = instances.iter().map(|i| inference::s1_baseline(i, inv)).collect::<Result<_>>()?;
    systems.push(("s1".to_string(), s1));
    let mfs = instances
        .iter()
        .map(|i| inference::mfs_baseline(i, train, inv))
        .collect::<Result<_>>()?;
    systems.push(("mfs".to_string(), mfs));

    let mut inf = cfg.inference_config(seed);
    inf.use_glosses = false;
    let (frozen, bank) = knn_baseline_bank(train, &cfg.knn_encoder(seed), &inf)?;
    let knn = Predictor::knn(&bank, &frozen, inv, &inf)?.predict_all(instances.iter().copied())?;
    systems.push((inference::KNN_PROVENANCE.to_string(), knn));

    let (cls, _) = classifier_baseline_train(train, &cfg.classifier_config(seed))?;
    let cls_preds = instances
        .iter()
        .map(|i| classifier_baseline_predict(&cls, i, inv, cfg.fallback))
        .collect::<Result<_>>()?;
    systems.push((inference::CLASSIFIER_PROVENANCE.to_string(), cls_preds));

    if let Some(path) = checkpoint {
        let (ckpt, digest) = trainer::load_checkpoint(path)?;
        let mut inf = cfg.inference_config(seed);
        inf.score_fn = ckpt.config.score_fn;
        inf.use_glosses = ckpt.config.use_glosses;
        let model = ckpt.selected_model();
        let bank = build_support_bank(train, model, &inf, &digest)?;
        let preds = Predictor::new(&bank, model, inv, &inf)?.predict_all(instances.iter().copied())?;
        systems.push((inference::METRIC_PROVENANCE.to_string(), preds));
    }
    Ok(systems)
}

/// Header `d=<dim>`, then `id, sense, v_1 .. v_d` tab-separated per instance.
/// Unlabelled instances get an empty sense column.
pub fn dump_embeddings<E: ContextEncoder>(model: &E, instances: &[Instance]) -> String {
    let mut s = format!("d={}\n", model.dim());
    for inst in instances {
        s.push_str(&inst.id);
        s.push('\t');
        if let Some(g) = &inst.gold {
            s.push_str(g.as_str());
        }
        for x in model.encode(inst).iter() {
            let _ = write!(s, "\t{x}");
        }
        s.push('\n');
    }
    s
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let mut out = String::new();
    match run(cli, &mut out) {
        Ok(()) => {
            print!("{out}");
            0
        }
        Err(e) => {
            print!("{out}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
