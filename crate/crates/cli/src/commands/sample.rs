//! `xlt sample` — construct buckets for every (task, language, K) cell,
//! verify them, and write the published JSONL files.

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;

use xlt_core::corpus::{serialize_cls_tsv, LabelSet, Split};
use xlt_core::sampler::{
    buckets_to_jsonl, carve_dev_buckets, sample_cls_buckets, sample_seq_buckets, verify_bucket,
    Bucket, LabelCounts, SamplingConfig,
};

use crate::config::{resolve, Overrides, Resolved};
use crate::layout::{write_file, OutLayout};
use crate::GlobalArgs;

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long = "language", value_delimiter = ',')]
    pub languages: Vec<String>,
    #[arg(long = "k", value_delimiter = ',')]
    pub k: Vec<u32>,
    /// Buckets per cell.
    #[arg(long)]
    pub count: Option<u32>,
}

struct CellOutput {
    language: String,
    k: u32,
    jsonl: String,
    new_dev_tsv: Option<String>,
    summary: String,
}

pub fn run(global: &GlobalArgs, args: &SampleArgs) -> Result<()> {
    let cfg = resolve(
        global,
        &Overrides {
            task: args.task.as_deref(),
            languages: Some(&args.languages),
            k: if args.k.is_empty() { None } else { Some(&args.k) },
            count: args.count,
            ..Overrides::default()
        },
    )?;
    let layout = OutLayout::new(&cfg.out);

    let cells: Vec<(String, u32)> = cfg
        .languages
        .iter()
        .flat_map(|lang| cfg.k_values.iter().map(move |&k| (lang.clone(), k)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .context("building worker pool")?;
    let outputs: Vec<Result<CellOutput>> = pool.install(|| {
        cells
            .par_iter()
            .map(|(lang, k)| sample_cell(&cfg, lang, *k))
            .collect()
    });

    let mut failures = 0;
    for output in outputs {
        match output {
            Ok(cell) => {
                let path = layout.buckets(&cfg.task, &cell.language, cell.k);
                write_file(&path, cell.jsonl.as_bytes())?;
                if let Some(tsv) = &cell.new_dev_tsv {
                    write_file(&layout.new_dev(&cfg.task, &cell.language), tsv.as_bytes())?;
                }
                println!("{}", cell.summary);
            }
            Err(err) => {
                eprintln!("error: {err:#}");
                failures += 1;
            }
        }
    }
    if failures > 0 {
        bail!("{failures} cell(s) failed");
    }
    Ok(())
}

fn sample_cell(cfg: &Resolved, language: &str, k: u32) -> Result<CellOutput> {
    let dataset = cfg.manifest.load_dataset(&cfg.task, language)?;
    let sampling = SamplingConfig::new(k, cfg.seed).with_count(cfg.count);
    let labels = &dataset.label_set;

    let (buckets, new_dev_tsv, summary) = if labels.kind().is_sequence() {
        let data = dataset
            .split(Split::Train)
            .and_then(|e| e.as_seq())
            .with_context(|| {
                format!("task {:?} language {language:?} has no training split", cfg.task)
            })?;
        let buckets = sample_seq_buckets(&cfg.task, language, data, labels, &sampling)?;
        let summary = verify_seq_cell(&buckets, labels, k, &cfg.task, language)?;
        (buckets, None, summary)
    } else if dataset.has_train() {
        let data = dataset
            .split(Split::Train)
            .and_then(|e| e.as_cls())
            .expect("classification train split");
        let buckets = sample_cls_buckets(&cfg.task, language, data, labels, &sampling)?;
        let summary = verify_cls_cell(&buckets, labels, k, &cfg.task, language)?;
        (buckets, None, summary)
    } else {
        // no target training split: carve buckets out of dev, keep the rest
        let data = dataset
            .split(Split::Dev)
            .and_then(|e| e.as_cls())
            .with_context(|| {
                format!(
                    "task {:?} language {language:?} has neither train nor dev split",
                    cfg.task
                )
            })?;
        let (buckets, new_dev) = carve_dev_buckets(&cfg.task, language, data, labels, &sampling)?;
        let summary = format!(
            "{} (carved from dev, {} examples remain)",
            verify_cls_cell(&buckets, labels, k, &cfg.task, language)?,
            new_dev.len()
        );
        (buckets, Some(serialize_cls_tsv(&new_dev)), summary)
    };

    Ok(CellOutput {
        language: language.to_string(),
        k,
        jsonl: buckets_to_jsonl(&buckets)?,
        new_dev_tsv,
        summary,
    })
}

pub(crate) fn verify_seq_cell(
    buckets: &[Bucket],
    labels: &LabelSet,
    k: u32,
    task: &str,
    language: &str,
) -> Result<String> {
    let mut coverage = 0;
    let mut minimality = 0;
    for bucket in buckets {
        let report = verify_bucket(bucket, labels, k)?;
        if !report.ok() {
            bail!(
                "{task}/{language} k={k}: bucket {} failed verification (coverage: {}, minimality: {}, offenders: {:?})",
                bucket.bucket_index,
                report.coverage,
                report.minimality,
                report.offenders
            );
        }
        coverage += report.coverage as usize;
        minimality += report.minimality as usize;
    }
    Ok(format!(
        "{task}/{language} k={k}: {} buckets, coverage {coverage}/{}, minimality {minimality}/{}",
        buckets.len(),
        buckets.len(),
        buckets.len()
    ))
}

pub(crate) fn verify_cls_cell(
    buckets: &[Bucket],
    labels: &LabelSet,
    k: u32,
    task: &str,
    language: &str,
) -> Result<String> {
    for bucket in buckets {
        let counts = LabelCounts::of_bucket(bucket, labels)?;
        for name in labels.iter() {
            let id = labels.id(name).expect("label from the set");
            if counts.get(id) != u64::from(k) {
                bail!(
                    "{task}/{language} k={k}: bucket {} has {} examples of class {name:?}, expected {k}",
                    bucket.bucket_index,
                    counts.get(id)
                );
            }
        }
    }
    for i in 0..buckets.len() {
        for j in (i + 1)..buckets.len() {
            let a: std::collections::HashSet<_> = buckets[i].source_indices.iter().collect();
            if buckets[j].source_indices.iter().any(|x| a.contains(x)) {
                bail!(
                    "{task}/{language} k={k}: buckets {i} and {j} overlap",
                );
            }
        }
    }
    Ok(format!(
        "{task}/{language} k={k}: {} buckets, {} items each, exact K per class, pairwise disjoint",
        buckets.len(),
        labels.len() * k as usize
    ))
}
