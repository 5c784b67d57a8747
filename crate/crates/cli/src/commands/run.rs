//! `xlt run` — the experiment driver: source-train once (or per seed),
//! target-adapt over buckets, and append results.
//!
//! Two sweep modes reproduce the variance study: the default varies the
//! bucket under a fixed seed; `--vary seeds` fixes one bucket and re-runs
//! the whole pipeline under seeds `0..count`, so the seed governs model
//! initialization and batch order.

use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use xlt_core::adapt::{
    config_hash, evaluate, featurize_examples, load_checkpoint, save_checkpoint, source_train,
    target_adapt, target_adapt_search, AdaptVariant, ToyModel, TrainConfig,
};
use xlt_core::corpus::{parse_cls_tsv, LabelSet, Split};
use xlt_core::sampler::{read_buckets_jsonl, Bucket};
use xlt_core::seed::mix64;
use xlt_core::stats::{write_results_csv, write_traces_jsonl, RunResult};

use crate::config::{resolve, Overrides};
use crate::layout::{write_file, OutLayout};
use crate::GlobalArgs;

const INIT_STREAM: u64 = 0x0003_0000;

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long = "language", value_delimiter = ',')]
    pub languages: Vec<String>,
    #[arg(long = "k", value_delimiter = ',')]
    pub k: Vec<u32>,
    /// Runs per cell: buckets to adapt on, or seeds to sweep.
    #[arg(long)]
    pub count: Option<u32>,
    /// Adaptation variant: full, fc-only, fc-pooler, cos-pooler,
    /// fc-reset-pooler.
    #[arg(long)]
    pub variant: Option<String>,
    /// Fixed target-adaptation learning rate (default: the rate source
    /// training selected).
    #[arg(long)]
    pub lr: Option<f64>,
    /// Search the learning-rate grid per run instead.
    #[arg(long)]
    pub lr_search: bool,
    /// Skip source training and adapt a freshly initialized model.
    #[arg(long)]
    pub skip_source: bool,
    /// What varies across the runs of a cell.
    #[arg(long, value_enum, default_value_t = VaryMode::Buckets)]
    pub vary: VaryMode,
    /// Bucket used by `--vary seeds`.
    #[arg(long, default_value_t = 0)]
    pub bucket_index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VaryMode {
    /// Fixed seed, one run per bucket.
    Buckets,
    /// Fixed bucket, one full-pipeline run per seed.
    Seeds,
}

#[derive(Debug, Clone, Copy)]
enum LrPolicy {
    Fixed(f64),
    Search,
    SourceBest,
}

/// Sidecar next to the cached source checkpoint, keeping the searched
/// learning rate and dev score.
#[derive(Debug, Serialize, Deserialize)]
struct SourceMeta {
    dev_score: f64,
    learning_rate: f64,
}

struct SourceModel {
    model: ToyModel,
    /// Grid learning rate chosen by source training; `None` for the
    /// skip-source ablation.
    learning_rate: Option<f64>,
}

pub fn run(global: &GlobalArgs, args: &RunArgs) -> Result<()> {
    let cfg = resolve(
        global,
        &Overrides {
            task: args.task.as_deref(),
            languages: Some(&args.languages),
            k: if args.k.is_empty() { None } else { Some(&args.k) },
            count: args.count,
            variant: args.variant.as_deref(),
        },
    )?;
    let layout = OutLayout::new(&cfg.out);
    let spec = cfg.manifest.task(&cfg.task)?;
    if spec.kind.is_sequence() {
        bail!(
            "target adaptation runs classification tasks only; {:?} is a {} task",
            cfg.task,
            spec.kind
        );
    }
    let labels = LabelSet::new(spec.labels.clone(), spec.kind)?;
    let variant: AdaptVariant = cfg.variant.parse().map_err(anyhow::Error::msg)?;
    let model_cfg = cfg.model_config(labels.len());
    let train_cfg = cfg.train_config();
    let lr_policy = match (args.lr.or(cfg.train.lr), args.lr_search || cfg.train.lr_search) {
        (_, true) => LrPolicy::Search,
        (Some(lr), false) => LrPolicy::Fixed(lr),
        (None, false) => LrPolicy::SourceBest,
    };

    let source_sets = if args.skip_source {
        None
    } else {
        let ds = cfg
            .manifest
            .load_dataset(&cfg.task, &cfg.source_language)?;
        let train = ds
            .split(Split::Train)
            .and_then(|e| e.as_cls())
            .with_context(|| {
                format!("source language {:?} has no training split", cfg.source_language)
            })?;
        let dev = ds.split(Split::Dev).and_then(|e| e.as_cls()).with_context(|| {
            format!("source language {:?} has no dev split", cfg.source_language)
        })?;
        Some((
            featurize_examples(train, &labels, &model_cfg)?,
            featurize_examples(dev, &labels, &model_cfg)?,
        ))
    };

    let obtain_source = |seed: u64, cache_path: Option<&Path>| -> Result<SourceModel> {
        let seeded_cfg = TrainConfig {
            seed,
            ..train_cfg.clone()
        };
        let init = ToyModel::init(model_cfg, mix64(seed, INIT_STREAM));
        let Some((src_train, src_dev)) = &source_sets else {
            return Ok(SourceModel {
                model: init,
                learning_rate: None,
            });
        };
        let hash = config_hash(&model_cfg, &seeded_cfg);
        if let Some(path) = cache_path {
            if path.exists() {
                let file = std::fs::File::open(path)?;
                if let Ok(model) = load_checkpoint(BufReader::new(file), Some(&hash)) {
                    let meta_path = path.with_extension("meta.json");
                    let meta: SourceMeta =
                        serde_json::from_str(&std::fs::read_to_string(&meta_path).with_context(
                            || format!("reading {}", meta_path.display()),
                        )?)?;
                    log::info!("loaded cached source model from {}", path.display());
                    return Ok(SourceModel {
                        model,
                        learning_rate: Some(meta.learning_rate),
                    });
                }
                log::info!("cached source model has a stale config hash; retraining");
            }
        }
        let outcome = source_train(&init, src_train, src_dev, &seeded_cfg)?;
        if let Some(path) = cache_path {
            let mut bytes = Vec::new();
            save_checkpoint(&mut bytes, &outcome.model, &hash)?;
            write_file(path, &bytes)?;
            let meta = SourceMeta {
                dev_score: outcome.dev_score,
                learning_rate: outcome.learning_rate,
            };
            write_file(
                &path.with_extension("meta.json"),
                serde_json::to_string_pretty(&meta)?.as_bytes(),
            )?;
            println!(
                "source-trained {} (dev {:.4}, lr {})",
                cfg.task, outcome.dev_score, outcome.learning_rate
            );
        }
        Ok(SourceModel {
            model: outcome.model,
            learning_rate: Some(outcome.learning_rate),
        })
    };

    // shared source model for the fixed-seed sweep
    let shared_source = match args.vary {
        VaryMode::Buckets => Some(obtain_source(
            cfg.seed,
            Some(&layout.source_model(&cfg.task)),
        )?),
        VaryMode::Seeds => None,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .context("building worker pool")?;

    let mut failures = 0usize;
    for language in &cfg.languages {
        let dataset = cfg.manifest.load_dataset(&cfg.task, language)?;
        // model selection must not see carved-out bucket examples
        let new_dev_path = layout.new_dev(&cfg.task, language);
        let dev_examples = if new_dev_path.exists() {
            parse_cls_tsv(&std::fs::read_to_string(&new_dev_path)?)?
        } else {
            dataset
                .split(Split::Dev)
                .and_then(|e| e.as_cls())
                .with_context(|| format!("language {language:?} has no dev split"))?
                .to_vec()
        };
        let dev = featurize_examples(&dev_examples, &labels, &model_cfg)?;
        let test_examples = dataset
            .split(Split::Test)
            .and_then(|e| e.as_cls())
            .with_context(|| format!("language {language:?} has no test split"))?;
        let test = featurize_examples(test_examples, &labels, &model_cfg)?;

        if let Some(source) = &shared_source {
            let score = evaluate(&source.model, &test)?;
            let csv = format!("task,language,score\n{},{language},{score}\n", cfg.task);
            write_file(&layout.zero_shot(&cfg.task, language), csv.as_bytes())?;
        }

        for &k in &cfg.k_values {
            let path = layout.buckets(&cfg.task, language, k);
            if !path.exists() {
                bail!(
                    "no buckets at {} (run `xlt sample --task {} --k {k}` first)",
                    path.display(),
                    cfg.task
                );
            }
            let file = std::fs::File::open(&path)?;
            let buckets = read_buckets_jsonl(BufReader::new(file))?;
            if buckets.is_empty() {
                bail!("{} holds no buckets; re-run `xlt sample`", path.display());
            }

            let adapt_one = |bucket: &Bucket, source: &SourceModel, seed: u64| -> Result<RunResult> {
                let seeded_cfg = TrainConfig {
                    seed,
                    ..train_cfg.clone()
                };
                let run = match lr_policy {
                    LrPolicy::Search => target_adapt_search(
                        &source.model,
                        bucket,
                        &dev,
                        &test,
                        variant,
                        &labels,
                        &seeded_cfg,
                    )?,
                    LrPolicy::Fixed(lr) => target_adapt(
                        &source.model,
                        bucket,
                        &dev,
                        &test,
                        variant,
                        &labels,
                        &seeded_cfg,
                        lr,
                    )?,
                    LrPolicy::SourceBest => {
                        let lr = source.learning_rate.unwrap_or_else(|| {
                            let fallback = seeded_cfg.effective_lr_grid()[0];
                            log::warn!(
                                "no source-selected learning rate (skip-source); using {fallback}"
                            );
                            fallback
                        });
                        target_adapt(
                            &source.model,
                            bucket,
                            &dev,
                            &test,
                            variant,
                            &labels,
                            &seeded_cfg,
                            lr,
                        )?
                    }
                };
                Ok(run)
            };

            let outcomes: Vec<Result<RunResult>> = match args.vary {
                VaryMode::Buckets => {
                    let needed = cfg.count as usize;
                    if buckets.len() < needed {
                        bail!(
                            "{} holds {} buckets but count={} was requested; re-run `xlt sample --count {}`",
                            path.display(),
                            buckets.len(),
                            needed,
                            needed
                        );
                    }
                    let source = shared_source.as_ref().expect("built for bucket sweeps");
                    pool.install(|| {
                        buckets[..needed]
                            .par_iter()
                            .map(|bucket| adapt_one(bucket, source, cfg.seed))
                            .collect()
                    })
                }
                VaryMode::Seeds => {
                    let bucket = buckets
                        .get(args.bucket_index as usize)
                        .with_context(|| {
                            format!(
                                "bucket index {} out of range ({} buckets in {})",
                                args.bucket_index,
                                buckets.len(),
                                path.display()
                            )
                        })?;
                    pool.install(|| {
                        (0..u64::from(cfg.count))
                            .into_par_iter()
                            .map(|seed| {
                                let source = obtain_source(seed, None)?;
                                adapt_one(bucket, &source, seed)
                            })
                            .collect()
                    })
                }
            };

            let mut results = Vec::new();
            for outcome in outcomes {
                match outcome {
                    Ok(run) => results.push(run),
                    Err(err) => {
                        log::error!("{}/{language} k={k}: run failed: {err:#}", cfg.task);
                        failures += 1;
                    }
                }
            }
            let mut csv = Vec::new();
            write_results_csv(&mut csv, &results)?;
            write_file(&layout.results(&cfg.task, language, k), &csv)?;
            let mut traces = Vec::new();
            write_traces_jsonl(&mut traces, &results)?;
            write_file(&layout.traces(&cfg.task, language, k), &traces)?;

            let devs: Vec<f64> = results.iter().map(|r| r.best_dev_score).collect();
            let summary = xlt_core::stats::aggregate(&devs)
                .map(|a| format!("dev {}", a.display_cell()))
                .unwrap_or_else(|_| "no successful runs".into());
            println!(
                "{}/{language} k={k}: {} runs, {summary}",
                cfg.task,
                results.len()
            );
        }
    }

    if failures > 0 {
        bail!("{failures} run(s) failed; partial results were written");
    }
    Ok(())
}
