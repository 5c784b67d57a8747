//! `xlt analyze` — bucket and prediction diagnostics: lexical-overlap
//! tables, Jaccard overlap matrices between bucket vocabularies and
//! improved predictions, in-bucket presence splits, confusion matrices,
//! and attention-delta tables from externally produced dumps.

use std::fmt::Write as _;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use xlt_core::analysis::{
    attention_delta, format_per_mille, improved_set, in_bucket_split, lexical_overlap,
    overlap_matrix, parse_attention_dump, ImprovedSet,
};
use xlt_core::corpus::{LabelSet, Sentence, Split};
use xlt_core::metrics::{confusion, read_predictions_jsonl, ConfusionMatrix, Labels};
use xlt_core::sampler::{read_buckets_jsonl, Bucket};

use crate::commands::{buckets_vocabulary, bucket_vocabulary, examples_vocabulary};
use crate::config::{resolve, Overrides, Resolved};
use crate::layout::{write_file, OutLayout};
use crate::GlobalArgs;

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long = "language", value_delimiter = ',')]
    pub languages: Vec<String>,
    #[arg(long = "k", value_delimiter = ',')]
    pub k: Vec<u32>,
    /// Zero-shot predictions (JSON Lines {"id","gold","pred"}).
    #[arg(long)]
    pub zs_pred: Option<PathBuf>,
    /// Directory of per-bucket few-shot prediction files, one per bucket,
    /// ordered by filename.
    #[arg(long)]
    pub fs_pred_dir: Option<PathBuf>,
    /// Attention dump before adaptation (tokens header, one row per head).
    #[arg(long)]
    pub attn_before: Option<PathBuf>,
    /// Attention dump after adaptation.
    #[arg(long)]
    pub attn_after: Option<PathBuf>,
}

pub fn run(global: &GlobalArgs, args: &AnalyzeArgs) -> Result<()> {
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

    write_lexical_overlap_table(&cfg, &layout)?;

    if args.zs_pred.is_some() || args.fs_pred_dir.is_some() {
        let (Some(zs_path), Some(fs_dir)) = (&args.zs_pred, &args.fs_pred_dir) else {
            bail!("prediction analyses need both --zs-pred and --fs-pred-dir");
        };
        if cfg.languages.len() != 1 || cfg.k_values.len() != 1 {
            bail!("prediction analyses work on one cell; pass a single --language and --k");
        }
        analyze_predictions(&cfg, &layout, &cfg.languages[0], cfg.k_values[0], zs_path, fs_dir)?;
    }

    match (&args.attn_before, &args.attn_after) {
        (Some(before), Some(after)) => write_attention_delta(&cfg, &layout, before, after)?,
        (None, None) => {}
        _ => bail!("attention analysis needs both --attn-before and --attn-after"),
    }
    Ok(())
}

/// Per-mille lexical overlap of each (language, K) cell's bucket
/// vocabulary with the source training vocabulary.
fn write_lexical_overlap_table(cfg: &Resolved, layout: &OutLayout) -> Result<()> {
    let source_ds = cfg
        .manifest
        .load_dataset(&cfg.task, &cfg.source_language)?;
    let en_split = source_ds
        .split(Split::Train)
        .or_else(|| source_ds.split(Split::Dev))
        .with_context(|| {
            format!(
                "source language {:?} has no train or dev split for the overlap vocabulary",
                cfg.source_language
            )
        })?;
    let en_vocab = examples_vocabulary(en_split, cfg.lowercase);

    let mut csv = String::from("language");
    for k in &cfg.k_values {
        write!(csv, ",k{k}").unwrap();
    }
    csv.push('\n');
    for language in &cfg.languages {
        write!(csv, "{language}").unwrap();
        for &k in &cfg.k_values {
            let path = layout.buckets(&cfg.task, language, k);
            if !path.exists() {
                bail!(
                    "no buckets at {} (run `xlt sample --task {} --k {k}` first)",
                    path.display(),
                    cfg.task
                );
            }
            let buckets = read_buckets_jsonl(BufReader::new(std::fs::File::open(&path)?))?;
            let vocab = buckets_vocabulary(&buckets, cfg.lowercase);
            let ratio = lexical_overlap(&vocab, &en_vocab)?;
            write!(csv, ",{}", format_per_mille(ratio)).unwrap();
        }
        csv.push('\n');
    }
    let path = layout.task_reports(&cfg.task).join("lexical_overlap.csv");
    write_file(&path, csv.as_bytes())?;
    println!("wrote {} (per-mille)", path.display());
    Ok(())
}

fn load_buckets(layout: &OutLayout, task: &str, language: &str, k: u32) -> Result<Vec<Bucket>> {
    let path = layout.buckets(task, language, k);
    if !path.exists() {
        bail!("no buckets at {} (run `xlt sample` first)", path.display());
    }
    Ok(read_buckets_jsonl(BufReader::new(std::fs::File::open(
        &path,
    )?))?)
}

fn read_predictions(path: &Path) -> Result<Vec<xlt_core::metrics::PredictionRecord>> {
    if !path.exists() {
        bail!("prediction file {} not found", path.display());
    }
    Ok(read_predictions_jsonl(BufReader::new(std::fs::File::open(
        path,
    )?))?)
}

fn analyze_predictions(
    cfg: &Resolved,
    layout: &OutLayout,
    language: &str,
    k: u32,
    zs_path: &Path,
    fs_dir: &Path,
) -> Result<()> {
    let spec = cfg.manifest.task(&cfg.task)?;
    let labels = LabelSet::new(spec.labels.clone(), spec.kind)?;
    let dataset = cfg.manifest.load_dataset(&cfg.task, language)?;
    let test = dataset
        .split(Split::Test)
        .with_context(|| format!("language {language:?} has no test split"))?;
    let reports = layout.cell_reports(&cfg.task, language, k);

    let mut fs_files: Vec<PathBuf> = std::fs::read_dir(fs_dir)
        .with_context(|| format!("reading few-shot prediction directory {}", fs_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "jsonl").unwrap_or(false))
        .collect();
    fs_files.sort();
    if fs_files.is_empty() {
        bail!("{} holds no .jsonl prediction files", fs_dir.display());
    }

    if spec.kind.is_sequence() {
        let sentences = test.as_seq().expect("sequence task has sentences");
        let tokens: Vec<Vec<String>> = sentences.iter().map(|s| s.tokens.clone()).collect();
        let gold: Vec<Vec<String>> = sentences.iter().map(|s| s.labels.clone()).collect();
        let zs = aligned_seq_predictions(&read_predictions(zs_path)?, sentences, zs_path)?;

        let buckets = load_buckets(layout, &cfg.task, language, k)?;
        if fs_files.len() > buckets.len() {
            bail!(
                "{} prediction files in {} but only {} buckets sampled",
                fs_files.len(),
                fs_dir.display(),
                buckets.len()
            );
        }
        let mut improved: Vec<ImprovedSet> = Vec::new();
        for (i, path) in fs_files.iter().enumerate() {
            let fs = aligned_seq_predictions(&read_predictions(path)?, sentences, path)?;
            improved.push(improved_set(&tokens, &gold, &zs, &fs, i as u32)?);
        }
        let vocabs: Vec<_> = buckets[..improved.len()]
            .iter()
            .map(|b| bucket_vocabulary(b, cfg.lowercase))
            .collect();

        let matrix = overlap_matrix(&vocabs, &improved)?;
        write_matrix_csv(&reports.join("overlap_raw.csv"), &matrix.raw)?;
        write_matrix_csv(&reports.join("overlap_normalized.csv"), &matrix.normalized)?;

        let mut csv = String::from("bucket,present,absent\n");
        for (i, set) in improved.iter().enumerate() {
            let split = in_bucket_split(set, &vocabs[i]);
            writeln!(csv, "{i},{},{}", split.present, split.absent).unwrap();
        }
        write_file(&reports.join("in_bucket_split.csv"), csv.as_bytes())?;
        println!(
            "wrote overlap matrices and presence splits for {} buckets to {}",
            improved.len(),
            reports.display()
        );
    } else {
        let examples = test.as_cls().expect("classification task has examples");
        let gold: Vec<String> = examples.iter().map(|e| e.label.clone()).collect();
        let zs = aligned_cls_predictions(&read_predictions(zs_path)?, &gold, zs_path)?;
        let zs_matrix = confusion(&gold, &zs, &labels)?;
        write_confusion_csv(&reports.join("confusion_zero_shot.csv"), &zs_matrix, &labels)?;

        let mut fs_matrices = Vec::new();
        for path in &fs_files {
            let fs = aligned_cls_predictions(&read_predictions(path)?, &gold, path)?;
            fs_matrices.push(confusion(&gold, &fs, &labels)?);
        }
        let mean = ConfusionMatrix::mean_round(&fs_matrices)?;
        write_confusion_csv(&reports.join("confusion_few_shot_mean.csv"), &mean, &labels)?;
        println!(
            "wrote confusion matrices (zero-shot and mean over {} runs) to {}",
            fs_matrices.len(),
            reports.display()
        );
    }
    Ok(())
}

/// Orders sequence predictions by id and cross-checks the recorded gold
/// labels against the dataset.
fn aligned_seq_predictions(
    records: &[xlt_core::metrics::PredictionRecord],
    sentences: &[Sentence],
    path: &Path,
) -> Result<Vec<Vec<String>>> {
    if records.len() != sentences.len() {
        bail!(
            "{} has {} records but the test split has {} sentences",
            path.display(),
            records.len(),
            sentences.len()
        );
    }
    let mut preds: Vec<Option<Vec<String>>> = vec![None; sentences.len()];
    for record in records {
        let idx = record.id as usize;
        if idx >= sentences.len() {
            bail!("{}: id {} outside the test split", path.display(), record.id);
        }
        let (Labels::Seq(gold), Labels::Seq(pred)) = (&record.gold, &record.pred) else {
            bail!("{}: sequence task needs label arrays", path.display());
        };
        if *gold != sentences[idx].labels {
            bail!(
                "{}: gold labels of id {} disagree with the dataset",
                path.display(),
                record.id
            );
        }
        if pred.len() != sentences[idx].labels.len() {
            bail!(
                "{}: prediction length mismatch at id {}",
                path.display(),
                record.id
            );
        }
        preds[idx] = Some(pred.clone());
    }
    preds
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.with_context(|| format!("{}: no record for id {i}", path.display())))
        .collect()
}

fn aligned_cls_predictions(
    records: &[xlt_core::metrics::PredictionRecord],
    gold: &[String],
    path: &Path,
) -> Result<Vec<String>> {
    if records.len() != gold.len() {
        bail!(
            "{} has {} records but the test split has {} examples",
            path.display(),
            records.len(),
            gold.len()
        );
    }
    let mut preds: Vec<Option<String>> = vec![None; gold.len()];
    for record in records {
        let idx = record.id as usize;
        if idx >= gold.len() {
            bail!("{}: id {} outside the test split", path.display(), record.id);
        }
        let (Labels::One(g), Labels::One(p)) = (&record.gold, &record.pred) else {
            bail!("{}: classification task needs single labels", path.display());
        };
        if *g != gold[idx] {
            bail!(
                "{}: gold label of id {} disagrees with the dataset",
                path.display(),
                record.id
            );
        }
        preds[idx] = Some(p.clone());
    }
    preds
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.with_context(|| format!("{}: no record for id {i}", path.display())))
        .collect()
}

fn write_matrix_csv(path: &Path, matrix: &[Vec<f64>]) -> Result<()> {
    let cols = matrix.first().map(Vec::len).unwrap_or(0);
    let mut csv = String::from("bucket");
    for c in 0..cols {
        write!(csv, ",c{c}").unwrap();
    }
    csv.push('\n');
    for (i, row) in matrix.iter().enumerate() {
        write!(csv, "{i}").unwrap();
        for v in row {
            write!(csv, ",{v}").unwrap();
        }
        csv.push('\n');
    }
    write_file(path, csv.as_bytes())
}

fn write_confusion_csv(path: &Path, matrix: &ConfusionMatrix, labels: &LabelSet) -> Result<()> {
    let mut csv = String::from("gold");
    for name in labels.iter() {
        write!(csv, ",{name}").unwrap();
    }
    csv.push('\n');
    for (g, name) in labels.iter().enumerate() {
        write!(csv, "{name}").unwrap();
        for p in 0..matrix.n {
            write!(csv, ",{}", matrix.cells[g][p]).unwrap();
        }
        csv.push('\n');
    }
    write_file(path, csv.as_bytes())
}

fn write_attention_delta(
    cfg: &Resolved,
    layout: &OutLayout,
    before_path: &Path,
    after_path: &Path,
) -> Result<()> {
    let read_dump = |path: &Path| -> Result<_> {
        if !path.exists() {
            bail!("attention dump {} not found", path.display());
        }
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading attention dump {}", path.display()))?;
        Ok(parse_attention_dump(&text)?)
    };
    let before = read_dump(before_path)?;
    let after = read_dump(after_path)?;
    let deltas = attention_delta(&before, &after)?;

    let mut csv = String::from("token,delta_pp\n");
    let mut table = String::from("token        delta\n");
    for (token, delta) in &deltas {
        writeln!(csv, "{token},{delta:+.2}").unwrap();
        writeln!(table, "{token:<12} {delta:+.2}").unwrap();
    }
    let path = layout.task_reports(&cfg.task).join("attention_delta.csv");
    write_file(&path, csv.as_bytes())?;
    println!("{table}");
    println!("wrote {}", path.display());
    Ok(())
}
