//! Diagnostics relating adaptation gains to surface evidence: lexical
//! overlap with the source language, typological feature commonality,
//! improved-prediction sets, bucket/improvement Jaccard matrices,
//! in-bucket presence splits, and attention-delta tables computed from
//! externally produced dumps (this harness never runs an encoder).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("source-language vocabulary must be non-empty")]
    EmptyEnVocab,
    #[error("expected {expected} aligned lists, found lengths {found:?}")]
    ListMismatch {
        expected: usize,
        found: Vec<usize>,
    },
    #[error("sequence {index}: aligned lengths differ ({lengths:?})")]
    SequenceMismatch { index: usize, lengths: Vec<usize> },
    #[error("attention dumps disagree: {0}")]
    DumpMismatch(String),
    #[error("attention dump line {line}: {msg}")]
    DumpParse { line: usize, msg: String },
    #[error("WALS table line {line}: expected 8 tab-separated fields, found {found}")]
    WalsFieldCount { line: usize, found: usize },
    #[error("no WALS profile for language {0:?}")]
    UnknownWalsLanguage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// The six word-order features used to count commonality with the source
/// language, in table column order.
pub const WALS_FEATURES: [&str; 6] = ["81A", "85A", "86A", "87A", "88A", "89A"];

/// A language's writing script plus its six word-order feature values.
/// `None` marks features the WALS database lacks for that language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalsProfile {
    pub language: String,
    pub script: String,
    pub features: [Option<String>; 6],
}

/// Number of the six features where both languages have a value and the
/// values are equal. A missing feature never matches anything.
pub fn common_wals(a: &WalsProfile, b: &WalsProfile) -> usize {
    a.features
        .iter()
        .zip(&b.features)
        .filter(|(x, y)| matches!((x, y), (Some(x), Some(y)) if x == y))
        .count()
}

/// Parses the WALS TSV: columns `language`, `script`, then the six
/// features; `-` marks a missing value. A header line (first field
/// `language`) is skipped when present.
pub fn parse_wals_tsv(input: &str) -> Result<Vec<WalsProfile>> {
    let mut profiles = Vec::new();
    for (i, line) in input.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if i == 0 && fields.first().map(|f| f.eq_ignore_ascii_case("language")) == Some(true) {
            continue;
        }
        if fields.len() != 8 {
            return Err(AnalysisError::WalsFieldCount {
                line: i + 1,
                found: fields.len(),
            });
        }
        let mut features: [Option<String>; 6] = Default::default();
        for (slot, value) in features.iter_mut().zip(&fields[2..]) {
            *slot = if *value == "-" || value.is_empty() {
                None
            } else {
                Some(value.to_string())
            };
        }
        profiles.push(WalsProfile {
            language: fields[0].to_string(),
            script: fields[1].to_string(),
            features,
        });
    }
    Ok(profiles)
}

pub fn find_wals<'a>(profiles: &'a [WalsProfile], language: &str) -> Result<&'a WalsProfile> {
    profiles
        .iter()
        .find(|p| p.language.eq_ignore_ascii_case(language))
        .ok_or_else(|| AnalysisError::UnknownWalsLanguage(language.to_string()))
}

/// Asymmetric lexical overlap: |target ∩ source| / |source|.
pub fn lexical_overlap(v_target: &BTreeSet<String>, v_en: &BTreeSet<String>) -> Result<f64> {
    if v_en.is_empty() {
        return Err(AnalysisError::EmptyEnVocab);
    }
    let shared = v_target.intersection(v_en).count();
    Ok(shared as f64 / v_en.len() as f64)
}

/// Renders an overlap ratio in per-mille with two decimals.
pub fn format_per_mille(ratio: f64) -> String {
    format!("{:.2}", ratio * 1000.0)
}

/// Test-set words fixed by adapting on one bucket: positions the zero-shot
/// model got wrong and the bucket-adapted model got right.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImprovedSet {
    pub bucket_index: u32,
    pub words: BTreeSet<String>,
}

/// Collects the improved-word set from aligned token/gold/zero-shot/few-shot
/// sequences.
pub fn improved_set(
    tokens: &[Vec<String>],
    gold: &[Vec<String>],
    zs_pred: &[Vec<String>],
    fs_pred: &[Vec<String>],
    bucket_index: u32,
) -> Result<ImprovedSet> {
    let lengths = [tokens.len(), gold.len(), zs_pred.len(), fs_pred.len()];
    if lengths.iter().any(|&l| l != tokens.len()) {
        return Err(AnalysisError::ListMismatch {
            expected: tokens.len(),
            found: lengths.to_vec(),
        });
    }
    let mut words = BTreeSet::new();
    for (index, (((t, g), z), f)) in tokens
        .iter()
        .zip(gold)
        .zip(zs_pred)
        .zip(fs_pred)
        .enumerate()
    {
        let inner = [t.len(), g.len(), z.len(), f.len()];
        if inner.iter().any(|&l| l != t.len()) {
            return Err(AnalysisError::SequenceMismatch {
                index,
                lengths: inner.to_vec(),
            });
        }
        for i in 0..t.len() {
            if z[i] != g[i] && f[i] == g[i] {
                words.insert(t[i].clone());
            }
        }
    }
    Ok(ImprovedSet {
        bucket_index,
        words,
    })
}

/// |a ∩ b| / |a ∪ b|; two empty sets yield 0 (and a warning, since the
/// ratio is formally undefined there).
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        log::warn!("jaccard of two empty sets is undefined; returning 0");
        return 0.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Bucket-vocabulary versus improved-set affinity matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatrix {
    /// `raw[i][k]` is the Jaccard index of bucket `i`'s vocabulary and the
    /// improvement set of bucket `k`.
    pub raw: Vec<Vec<f64>>,
    /// Each raw row passed through a softmax and scaled to percent; rows
    /// sum to 100.
    pub normalized: Vec<Vec<f64>>,
}

fn softmax_percent(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum * 100.0).collect()
}

/// Builds the Jaccard matrix of bucket vocabularies (rows) against
/// improved-prediction sets (columns), with row-wise softmax
/// normalization to percent.
pub fn overlap_matrix(
    bucket_vocabs: &[BTreeSet<String>],
    improved: &[ImprovedSet],
) -> Result<OverlapMatrix> {
    if bucket_vocabs.len() != improved.len() {
        return Err(AnalysisError::ListMismatch {
            expected: bucket_vocabs.len(),
            found: vec![bucket_vocabs.len(), improved.len()],
        });
    }
    let raw: Vec<Vec<f64>> = bucket_vocabs
        .iter()
        .map(|b| improved.iter().map(|c| jaccard(b, &c.words)).collect())
        .collect();
    let normalized = raw.iter().map(|row| softmax_percent(row)).collect();
    Ok(OverlapMatrix { raw, normalized })
}

/// Partition of an improved-word set by membership in a bucket vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresenceSplit {
    pub present: usize,
    pub absent: usize,
}

pub fn in_bucket_split(improved: &ImprovedSet, bucket_vocab: &BTreeSet<String>) -> PresenceSplit {
    let present = improved
        .words
        .iter()
        .filter(|w| bucket_vocab.contains(*w))
        .count();
    PresenceSplit {
        present,
        absent: improved.words.len() - present,
    }
}

/// Attention-from-CLS matrix: one row per head, one column per token.
/// Produced by an external model; ingested from a tab-separated text file
/// whose header row carries the tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionDump {
    pub tokens: Vec<String>,
    /// `rows[h][t]` is head `h`'s attention on token `t`.
    pub rows: Vec<Vec<f64>>,
}

impl AttentionDump {
    /// Per-token attention averaged over heads.
    pub fn head_mean(&self) -> Vec<f64> {
        let heads = self.rows.len() as f64;
        (0..self.tokens.len())
            .map(|t| self.rows.iter().map(|row| row[t]).sum::<f64>() / heads)
            .collect()
    }
}

pub fn parse_attention_dump(input: &str) -> Result<AttentionDump> {
    let mut lines = input.lines().enumerate();
    let (_, header) = lines.next().ok_or(AnalysisError::DumpParse {
        line: 1,
        msg: "missing token header row".into(),
    })?;
    let tokens: Vec<String> = header.split('\t').map(str::to_string).collect();
    if tokens.is_empty() || tokens.iter().all(String::is_empty) {
        return Err(AnalysisError::DumpParse {
            line: 1,
            msg: "empty token header row".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split('\t').map(|f| f.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| AnalysisError::DumpParse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if row.len() != tokens.len() {
            return Err(AnalysisError::DumpParse {
                line: i + 1,
                msg: format!("row has {} values for {} tokens", row.len(), tokens.len()),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(AnalysisError::DumpParse {
            line: 2,
            msg: "dump has no head rows".into(),
        });
    }
    Ok(AttentionDump { tokens, rows })
}

pub fn format_attention_dump(dump: &AttentionDump) -> String {
    let mut out = dump.tokens.join("\t");
    out.push('\n');
    for row in &dump.rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    out
}

/// Per-token change in head-averaged attention, in percentage points,
/// sorted by magnitude (ties keep token order). Both dumps must carry the
/// same tokens and head count.
pub fn attention_delta(
    before: &AttentionDump,
    after: &AttentionDump,
) -> Result<Vec<(String, f64)>> {
    if before.tokens != after.tokens {
        return Err(AnalysisError::DumpMismatch(
            "token rows differ between before and after".into(),
        ));
    }
    if before.rows.len() != after.rows.len() {
        return Err(AnalysisError::DumpMismatch(format!(
            "head counts differ ({} vs {})",
            before.rows.len(),
            after.rows.len()
        )));
    }
    let mean_before = before.head_mean();
    let mean_after = after.head_mean();
    let mut deltas: Vec<(String, f64)> = before
        .tokens
        .iter()
        .zip(mean_after.iter().zip(&mean_before))
        .map(|(token, (a, b))| (token.clone(), (a - b) * 100.0))
        .collect();
    deltas.sort_by(|(_, x), (_, y)| {
        y.abs()
            .partial_cmp(&x.abs())
            .expect("attention values are finite")
    });
    Ok(deltas)
}
