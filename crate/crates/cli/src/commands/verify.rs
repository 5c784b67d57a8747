//! `xlt verify` — re-check previously written bucket files against the
//! sampling invariants.

use std::collections::HashSet;
use std::io::BufReader;

use anyhow::{bail, Context, Result};
use clap::Args;

use xlt_core::sampler::{read_buckets_jsonl, verify_bucket, Bucket, LabelCounts};

use crate::config::{resolve, Overrides};
use crate::layout::OutLayout;
use crate::GlobalArgs;

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long = "language", value_delimiter = ',')]
    pub languages: Vec<String>,
    #[arg(long = "k", value_delimiter = ',')]
    pub k: Vec<u32>,
}

pub fn run(global: &GlobalArgs, args: &VerifyArgs) -> Result<()> {
    let cfg = resolve(
        global,
        &Overrides {
            task: args.task.as_deref(),
            languages: Some(&args.languages),
            k: if args.k.is_empty() { None } else { Some(&args.k) },
            ..Overrides::default()
        },
    )?;
    let layout = OutLayout::new(&cfg.out);
    let spec = cfg.manifest.task(&cfg.task)?;
    let labels = xlt_core::corpus::LabelSet::new(spec.labels.clone(), spec.kind)?;

    let mut failures = 0;
    for language in &cfg.languages {
        for &k in &cfg.k_values {
            let path = layout.buckets(&cfg.task, language, k);
            if !path.exists() {
                eprintln!("error: no bucket file at {} (run `xlt sample` first)", path.display());
                failures += 1;
                continue;
            }
            let file = std::fs::File::open(&path)
                .with_context(|| format!("opening {}", path.display()))?;
            let buckets = read_buckets_jsonl(BufReader::new(file))?;
            if buckets.is_empty() {
                eprintln!("error: {} holds no buckets", path.display());
                failures += 1;
                continue;
            }
            match verify_file(&buckets, &labels, k, &cfg.task, language) {
                Ok(summary) => println!("{summary}"),
                Err(err) => {
                    eprintln!("error: {err:#}");
                    failures += 1;
                }
            }
        }
    }
    if failures > 0 {
        bail!("{failures} bucket file(s) failed verification");
    }
    Ok(())
}

fn verify_file(
    buckets: &[Bucket],
    labels: &xlt_core::corpus::LabelSet,
    k: u32,
    task: &str,
    language: &str,
) -> Result<String> {
    if labels.kind().is_sequence() {
        for bucket in buckets {
            let report = verify_bucket(bucket, labels, k)?;
            if !report.ok() {
                bail!(
                    "{task}/{language} k={k}: bucket {} failed (coverage {}, minimality {}, offenders {:?})",
                    bucket.bucket_index,
                    report.coverage,
                    report.minimality,
                    report.offenders
                );
            }
        }
        Ok(format!(
            "{task}/{language} k={k}: {} buckets, coverage and minimality hold",
            buckets.len()
        ))
    } else {
        for bucket in buckets {
            let counts = LabelCounts::of_bucket(bucket, labels)?;
            for name in labels.iter() {
                let id = labels.id(name).expect("label from set");
                if counts.get(id) != u64::from(k) {
                    bail!(
                        "{task}/{language} k={k}: bucket {} has {} of class {name:?}, expected {k}",
                        bucket.bucket_index,
                        counts.get(id)
                    );
                }
            }
        }
        // reloaded buckets carry no source indices, so disjointness is
        // checked on item content
        let mut seen: HashSet<String> = HashSet::new();
        for bucket in buckets {
            for item in &bucket.items {
                let key = serde_json::to_string(item)?;
                if !seen.insert(key) {
                    bail!(
                        "{task}/{language} k={k}: bucket {} repeats an item already used by an earlier bucket",
                        bucket.bucket_index
                    );
                }
            }
        }
        Ok(format!(
            "{task}/{language} k={k}: {} buckets, exact K per class, no item shared across buckets",
            buckets.len()
        ))
    }
}
