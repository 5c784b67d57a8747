//! `xlt synth` — generate a synthetic classification task on disk so the
//! whole pipeline can run without any licensed corpus.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use xlt_core::corpus::{serialize_cls_tsv, LabelKind, Manifest, Split, TaskSpec};
use xlt_core::synth::{generate_language, SynthConfig, SOURCE_LANGUAGE};

use crate::layout::write_file;
use crate::GlobalArgs;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory to create the manifest and data files in.
    #[arg(long, default_value = "data")]
    pub dir: PathBuf,
    /// Task name used in the manifest and output layout.
    #[arg(long, default_value = "demo")]
    pub task: String,
    /// Target languages to generate (the source side is always generated).
    #[arg(long, value_delimiter = ',', default_value = "xx")]
    pub languages: Vec<String>,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 160)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 40)]
    pub dev_per_class: usize,
    #[arg(long, default_value_t = 40)]
    pub test_per_class: usize,
    /// Fraction of class keywords a target language shares with the source.
    #[arg(long, default_value_t = 0.3)]
    pub shared_fraction: f64,
    /// Keyword pool size per class.
    #[arg(long, default_value_t = 20)]
    pub keywords_per_class: usize,
    /// Min,max own-class keywords per example, e.g. `1,4`.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 4])]
    pub keywords_per_example: Vec<usize>,
    /// Shared noise vocabulary size.
    #[arg(long, default_value_t = 50)]
    pub noise_vocab: usize,
    /// Min,max noise tokens per example, e.g. `3,8`.
    #[arg(long, value_delimiter = ',', default_values_t = [3, 8])]
    pub noise_per_example: Vec<usize>,
}

pub fn run(global: &GlobalArgs, args: &SynthArgs) -> Result<()> {
    let range = |values: &[usize], flag: &str| -> Result<(usize, usize)> {
        match values {
            [lo, hi] if lo <= hi => Ok((*lo, *hi)),
            _ => anyhow::bail!("--{flag} expects `min,max` with min <= max"),
        }
    };
    let cfg = SynthConfig {
        classes: args.classes,
        shared_keyword_fraction: args.shared_fraction,
        keywords_per_class: args.keywords_per_class,
        keywords_per_example: range(&args.keywords_per_example, "keywords-per-example")?,
        noise_vocab: args.noise_vocab,
        noise_per_example: range(&args.noise_per_example, "noise-per-example")?,
        train_per_class: args.train_per_class,
        dev_per_class: args.dev_per_class,
        test_per_class: args.test_per_class,
        seed: global.seed.unwrap_or(0),
        ..SynthConfig::default()
    };

    let mut files: BTreeMap<String, BTreeMap<Split, PathBuf>> = BTreeMap::new();
    let mut languages = vec![SOURCE_LANGUAGE.to_string()];
    languages.extend(args.languages.iter().cloned());

    for lang in &languages {
        let dataset = generate_language(&cfg, &args.task, lang);
        let mut split_paths = BTreeMap::new();
        for (split, examples) in &dataset.splits {
            let rel = PathBuf::from(&args.task)
                .join(lang)
                .join(format!("{split}.tsv"));
            let text = serialize_cls_tsv(examples.as_cls().expect("synth data is cls"));
            write_file(&args.dir.join(&rel), text.as_bytes())?;
            split_paths.insert(*split, rel);
        }
        files.insert(lang.clone(), split_paths);
    }

    let manifest = Manifest {
        tasks: BTreeMap::from([(
            args.task.clone(),
            TaskSpec {
                kind: LabelKind::Classification,
                labels: (0..cfg.classes).map(|c| c.to_string()).collect(),
                files,
            },
        )]),
        base_dir: PathBuf::new(),
    };
    let manifest_path = args.dir.join("manifest.toml");
    let text = toml::to_string_pretty(&manifest).context("serializing manifest")?;
    write_file(&manifest_path, text.as_bytes())?;

    println!(
        "wrote synthetic task {:?} ({} classes, languages {:?}) to {}",
        args.task,
        cfg.classes,
        languages,
        args.dir.display()
    );
    println!("manifest: {}", manifest_path.display());
    Ok(())
}
