//! `xlt report` — aggregate results into the reporting artifacts: the
//! per-language table with a zero-shot column, per-cell histograms,
//! gain charts, and factor correlations against a WALS table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;

use xlt_core::analysis::{common_wals, find_wals, lexical_overlap, parse_wals_tsv};
use xlt_core::corpus::Split;
use xlt_core::sampler::read_buckets_jsonl;
use xlt_core::stats::{aggregate, gain, histogram, pearson, spearman, AggregateReport};

use crate::commands::{buckets_vocabulary, examples_vocabulary};
use crate::config::{resolve, Overrides, Resolved};
use crate::layout::{write_file, OutLayout};
use crate::plot::bar_chart;
use crate::GlobalArgs;

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long = "language", value_delimiter = ',')]
    pub languages: Vec<String>,
    #[arg(long = "k", value_delimiter = ',')]
    pub k: Vec<u32>,
    /// Histogram bin width on the score scale.
    #[arg(long, default_value_t = 0.02)]
    pub bin_width: f64,
    /// WALS feature TSV; enables the correlation table.
    #[arg(long)]
    pub wals: Option<PathBuf>,
    /// K whose gains feed the correlation table.
    #[arg(long, default_value_t = 1)]
    pub corr_k: u32,
}

#[derive(Serialize)]
struct TableCell {
    mean: f64,
    std: f64,
    display: String,
}

#[derive(Serialize)]
struct TableRow {
    language: String,
    zero_shot: Option<f64>,
    cells: BTreeMap<u32, TableCell>,
}

pub fn run(global: &GlobalArgs, args: &ReportArgs) -> Result<()> {
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

    let mut rows = Vec::new();
    for language in &cfg.languages {
        let zero_shot = read_zero_shot(&layout, &cfg.task, language)?;
        let mut cells = BTreeMap::new();
        for &k in &cfg.k_values {
            let results_path = layout.results(&cfg.task, language, k);
            if !results_path.exists() {
                bail!(
                    "no results at {} (run `xlt run --task {} --k {k}` first)",
                    results_path.display(),
                    cfg.task
                );
            }
            let rows_csv = xlt_core::stats::read_results_csv(std::fs::File::open(&results_path)?)?;
            if rows_csv.is_empty() {
                bail!("{} holds no result rows", results_path.display());
            }
            let devs: Vec<f64> = rows_csv.iter().map(|r| r.dev).collect();
            let tests: Vec<f64> = rows_csv.iter().map(|r| r.test).collect();
            let dev_agg = aggregate(&devs)?;
            let test_agg = aggregate(&tests)?;

            let reports = layout.cell_reports(&cfg.task, language, k);
            let payload = serde_json::json!({ "dev": dev_agg, "test": test_agg });
            write_file(
                &reports.join("aggregate.json"),
                serde_json::to_string_pretty(&payload)?.as_bytes(),
            )?;

            let bins = histogram(&devs, args.bin_width)?;
            let mut csv = String::from("bin_low,count\n");
            for (low, count) in &bins {
                writeln!(csv, "{low},{count}").unwrap();
            }
            write_file(&reports.join("histogram.csv"), csv.as_bytes())?;
            bar_chart(
                &reports.join("histogram.png"),
                &bins.iter().map(|(_, c)| *c as f64).collect::<Vec<_>>(),
            )?;

            cells.insert(
                k,
                TableCell {
                    mean: test_agg.mean,
                    std: test_agg.std_sample,
                    display: test_agg.display_cell(),
                },
            );
        }
        rows.push(TableRow {
            language: language.clone(),
            zero_shot,
            cells,
        });
    }

    let reports_dir = layout.task_reports(&cfg.task);
    write_table(&cfg, &reports_dir, &rows)?;
    write_gains(&cfg, &layout, &reports_dir, &rows)?;
    if let Some(wals_path) = &args.wals {
        write_correlations(&cfg, &layout, &reports_dir, &rows, wals_path, args.corr_k)?;
    }
    Ok(())
}

fn read_zero_shot(layout: &OutLayout, task: &str, language: &str) -> Result<Option<f64>> {
    let path = layout.zero_shot(task, language);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    let line = text
        .lines()
        .nth(1)
        .with_context(|| format!("{} is missing its data row", path.display()))?;
    let score: f64 = line
        .rsplit(',')
        .next()
        .unwrap_or_default()
        .parse()
        .with_context(|| format!("parsing score in {}", path.display()))?;
    Ok(Some(score))
}

fn write_table(cfg: &Resolved, reports_dir: &std::path::Path, rows: &[TableRow]) -> Result<()> {
    let lang_width = rows
        .iter()
        .map(|r| r.language.len())
        .chain(std::iter::once("language".len()))
        .max()
        .unwrap_or(8);
    let cell_width = 16;

    let mut text = format!("{} — test score, mean ± std over runs (percent)\n", cfg.task);
    write!(text, "{:<lang_width$}  {:>6}", "language", "K=0").unwrap();
    for k in &cfg.k_values {
        write!(text, "  {:>cell_width$}", format!("K={k}")).unwrap();
    }
    text.push('\n');
    for row in rows {
        let zs = row
            .zero_shot
            .map(|z| format!("{:.2}", z * 100.0))
            .unwrap_or_else(|| "N/A".into());
        write!(text, "{:<lang_width$}  {zs:>6}", row.language).unwrap();
        for k in &cfg.k_values {
            let cell = row
                .cells
                .get(k)
                .map(|c| c.display.clone())
                .unwrap_or_else(|| "N/A".into());
            write!(text, "  {cell:>cell_width$}").unwrap();
        }
        text.push('\n');
    }
    write_file(&reports_dir.join("table.txt"), text.as_bytes())?;

    let json = serde_json::json!({ "task": cfg.task, "rows": rows });
    write_file(
        &reports_dir.join("table.json"),
        serde_json::to_string_pretty(&json)?.as_bytes(),
    )?;
    println!("{text}");
    Ok(())
}

fn write_gains(
    _cfg: &Resolved,
    _layout: &OutLayout,
    reports_dir: &std::path::Path,
    rows: &[TableRow],
) -> Result<()> {
    let mut csv = String::from("language,k,delta_mean_pp,delta_std_pp\n");
    let mut per_k: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for row in rows {
        for (&k, cell) in &row.cells {
            match row.zero_shot {
                Some(zs) => {
                    let report = AggregateReport {
                        mean: cell.mean,
                        std_sample: cell.std,
                        min: 0.0,
                        max: 0.0,
                        max_diff: 0.0,
                        n: 0,
                    };
                    let g = gain(&report, zs);
                    writeln!(
                        csv,
                        "{},{k},{:.4},{:.4}",
                        row.language,
                        g.delta_mean * 100.0,
                        g.delta_std * 100.0
                    )
                    .unwrap();
                    per_k.entry(k).or_default().push(g.delta_mean * 100.0);
                }
                None => {
                    writeln!(csv, "{},{k},N/A,N/A", row.language).unwrap();
                }
            }
        }
    }
    write_file(&reports_dir.join("gains.csv"), csv.as_bytes())?;
    for (k, gains) in &per_k {
        bar_chart(&reports_dir.join(format!("gains_k{k}.png")), gains)?;
    }
    Ok(())
}

fn write_correlations(
    cfg: &Resolved,
    layout: &OutLayout,
    reports_dir: &std::path::Path,
    rows: &[TableRow],
    wals_path: &std::path::Path,
    corr_k: u32,
) -> Result<()> {
    let wals_text = std::fs::read_to_string(wals_path)
        .with_context(|| format!("reading WALS table {}", wals_path.display()))?;
    let profiles = parse_wals_tsv(&wals_text)?;
    let en = find_wals(&profiles, &cfg.source_language).with_context(|| {
        format!(
            "WALS table has no row for source language {:?}",
            cfg.source_language
        )
    })?;

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

    let mut gains_v = Vec::new();
    let mut overlap_v = Vec::new();
    let mut features_v = Vec::new();
    let mut used = Vec::new();
    let mut dropped = Vec::new();
    for row in rows {
        let Some(zs) = row.zero_shot else {
            dropped.push(format!("{} (no zero-shot baseline)", row.language));
            continue;
        };
        let Some(cell) = row.cells.get(&corr_k) else {
            dropped.push(format!("{} (no K={corr_k} results)", row.language));
            continue;
        };
        let buckets_path = layout.buckets(&cfg.task, &row.language, corr_k);
        if !buckets_path.exists() {
            dropped.push(format!("{} (no K={corr_k} buckets)", row.language));
            continue;
        }
        let buckets = read_buckets_jsonl(std::io::BufReader::new(std::fs::File::open(
            &buckets_path,
        )?))?;
        let profile = match find_wals(&profiles, &row.language) {
            Ok(p) if p.features.iter().any(Option::is_some) => p,
            _ => {
                dropped.push(format!("{} (missing WALS features)", row.language));
                continue;
            }
        };
        let vocab = buckets_vocabulary(&buckets, cfg.lowercase);
        gains_v.push(cell.mean - zs);
        overlap_v.push(lexical_overlap(&vocab, &en_vocab)?);
        features_v.push(common_wals(profile, en) as f64);
        used.push(row.language.clone());
    }

    let mut csv = String::from("factor,n,spearman,pearson\n");
    for (name, xs) in [
        ("lexical_overlap", &overlap_v),
        ("common_features", &features_v),
    ] {
        let (s, p) = if xs.len() >= 2 {
            (
                spearman(xs, &gains_v)
                    .map(|v| format!("{v:.4}"))
                    .unwrap_or_else(|_| "NA".into()),
                pearson(xs, &gains_v)
                    .map(|v| format!("{v:.4}"))
                    .unwrap_or_else(|_| "NA".into()),
            )
        } else {
            ("NA".into(), "NA".into())
        };
        writeln!(csv, "{name},{},{s},{p}", xs.len()).unwrap();
    }
    write_file(&reports_dir.join("correlations.csv"), csv.as_bytes())?;
    println!(
        "correlations over K={corr_k} gains for {:?}; dropped: {:?}",
        used, dropped
    );
    Ok(())
}
