//! N-way K-shot bucket construction.
//!
//! Classification tasks use disjoint stratified sampling: one seeded
//! shuffle per class, then consecutive K-blocks per bucket, so buckets are
//! disjoint by construction. Sequence-labeling tasks use minimum-including
//! sampling: grow a sentence set until every label occurs at least K times,
//! then drop every sentence whose removal keeps that coverage intact.
//! Buckets for sequence tasks may overlap with each other; classification
//! buckets never do.
//!
//! All samplers are pure functions of (input order, config); per-bucket
//! seeds are derived from the master seed so buckets can be produced in
//! any order or in parallel with identical results.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ClsExample, CorpusError, LabelId, LabelSet, Sentence};
use crate::seed::{mix64, rng_from};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("class {label:?} has {have} examples but {need} are required ({shortfall} short)")]
    Capacity {
        label: String,
        have: usize,
        need: usize,
        shortfall: usize,
    },
    #[error("label {label:?} occurs {occurrences} times in the corpus; coverage needs {needed}")]
    CoverageImpossible {
        label: String,
        occurrences: usize,
        needed: usize,
    },
    #[error("carving consumed every dev example; model selection needs a non-empty dev set")]
    EmptyRemainder,
    #[error("classification sampling requires cfg.disjoint")]
    DisjointRequired,
    #[error("invalid sampling config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("bucket file line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SamplerError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BucketKind {
    Classification,
    Sequence,
}

/// One sampled example carried inside a bucket file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BucketItem {
    Cls(ClsExample),
    Seq(Sentence),
}

impl BucketItem {
    /// Label occurrences of this item: one per token for sentences, a
    /// single occurrence for classification examples.
    pub fn label_occurrences(&self) -> Box<dyn Iterator<Item = &str> + '_> {
        match self {
            BucketItem::Cls(e) => Box::new(std::iter::once(e.label.as_str())),
            BucketItem::Seq(s) => Box::new(s.labels.iter().map(String::as_str)),
        }
    }
}

/// One sampled N-way K-shot set, with full provenance. Serialized as one
/// JSON line per bucket; the field order below is the published format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub task: String,
    pub language: String,
    pub k: u32,
    pub bucket_index: u32,
    pub seed: u64,
    pub kind: BucketKind,
    pub items: Vec<BucketItem>,
    /// Positions of the items in the source split; sampling provenance,
    /// not part of the published file format.
    #[serde(skip)]
    pub source_indices: Vec<usize>,
}

/// Sampling parameters shared by all bucket constructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Shots per class (classification) or per-label coverage threshold
    /// (sequence labeling).
    pub k: u32,
    /// Number of buckets per (task, language, k) cell.
    pub count: u32,
    /// Master seed; per-bucket and per-class streams derive from it.
    pub seed: u64,
    /// Whether buckets must be pairwise disjoint. Required for
    /// classification; sequence sampling ignores it.
    pub disjoint: bool,
}

impl SamplingConfig {
    pub fn new(k: u32, seed: u64) -> Self {
        Self {
            k,
            count: 40,
            seed,
            disjoint: true,
        }
    }

    pub fn with_count(mut self, count: u32) -> Self {
        self.count = count;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(SamplerError::InvalidConfig("k must be >= 1".into()));
        }
        if self.count < 1 {
            return Err(SamplerError::InvalidConfig("count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-label occurrence counts within a bucket.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelCounts {
    counts: Vec<u64>,
}

impl LabelCounts {
    pub fn of_bucket(bucket: &Bucket, labels: &LabelSet) -> Result<Self> {
        let mut counts = vec![0u64; labels.len()];
        for item in &bucket.items {
            for label in item.label_occurrences() {
                counts[labels.require(label)?.0 as usize] += 1;
            }
        }
        Ok(Self { counts })
    }

    pub fn get(&self, id: LabelId) -> u64 {
        self.counts[id.0 as usize]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn as_map<'a>(&self, labels: &'a LabelSet) -> BTreeMap<&'a str, u64> {
        labels
            .iter()
            .enumerate()
            .map(|(i, name)| (name, self.counts[i]))
            .collect()
    }
}

/// Samples `cfg.count` pairwise-disjoint buckets with exactly K examples
/// per class from a training split.
pub fn sample_cls_buckets(
    task: &str,
    language: &str,
    train: &[ClsExample],
    labels: &LabelSet,
    cfg: &SamplingConfig,
) -> Result<Vec<Bucket>> {
    cfg.validate()?;
    if !cfg.disjoint {
        return Err(SamplerError::DisjointRequired);
    }
    let k = cfg.k as usize;
    let count = cfg.count as usize;

    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); labels.len()];
    for (i, example) in train.iter().enumerate() {
        per_class[labels.require(&example.label)?.0 as usize].push(i);
    }
    let need = k * count;
    for (class, indices) in per_class.iter().enumerate() {
        if indices.len() < need {
            return Err(SamplerError::Capacity {
                label: labels.name(LabelId(class as u32)).to_string(),
                have: indices.len(),
                need,
                shortfall: need - indices.len(),
            });
        }
    }
    for (class, indices) in per_class.iter_mut().enumerate() {
        indices.shuffle(&mut rng_from(mix64(cfg.seed, class as u64)));
    }

    let mut buckets = Vec::with_capacity(count);
    for b in 0..count {
        let mut items = Vec::with_capacity(labels.len() * k);
        let mut source_indices = Vec::with_capacity(labels.len() * k);
        for indices in &per_class {
            for &i in &indices[b * k..(b + 1) * k] {
                items.push(BucketItem::Cls(train[i].clone()));
                source_indices.push(i);
            }
        }
        buckets.push(Bucket {
            task: task.to_string(),
            language: language.to_string(),
            k: cfg.k,
            bucket_index: b as u32,
            seed: cfg.seed,
            kind: BucketKind::Classification,
            items,
            source_indices,
        });
    }
    Ok(buckets)
}

/// Carves buckets out of a dev split (for tasks without a target-language
/// training split) and returns the untouched remainder, in original order,
/// as the new dev set.
pub fn carve_dev_buckets(
    task: &str,
    language: &str,
    dev: &[ClsExample],
    labels: &LabelSet,
    cfg: &SamplingConfig,
) -> Result<(Vec<Bucket>, Vec<ClsExample>)> {
    let buckets = sample_cls_buckets(task, language, dev, labels, cfg)?;
    let mut used = vec![false; dev.len()];
    for bucket in &buckets {
        for &i in &bucket.source_indices {
            used[i] = true;
        }
    }
    let new_dev: Vec<ClsExample> = dev
        .iter()
        .zip(&used)
        .filter(|(_, &u)| !u)
        .map(|(e, _)| e.clone())
        .collect();
    if new_dev.is_empty() {
        return Err(SamplerError::EmptyRemainder);
    }
    Ok((buckets, new_dev))
}

/// Token-level occurrence counts of each label in one sentence.
fn occurrence_profile(sentence: &Sentence, labels: &LabelSet) -> Result<Vec<u32>> {
    let mut profile = vec![0u32; labels.len()];
    for label in &sentence.labels {
        profile[labels.require(label)?.0 as usize] += 1;
    }
    Ok(profile)
}

/// Samples one minimum-including bucket: every label occurs at least `k`
/// times and no single sentence can be removed without breaking that.
///
/// The growth phase walks labels in label-set order, drawing uniformly from
/// the qualifying sentences not yet in the bucket; the removal pass then
/// visits items in insertion order and drops each one that is redundant.
pub fn minimum_including(
    task: &str,
    language: &str,
    data: &[Sentence],
    labels: &LabelSet,
    k: u32,
    seed: u64,
) -> Result<Bucket> {
    minimum_including_indexed(task, language, data, labels, k, seed, 0, seed)
}

#[allow(clippy::too_many_arguments)]
fn minimum_including_indexed(
    task: &str,
    language: &str,
    data: &[Sentence],
    labels: &LabelSet,
    k: u32,
    master_seed: u64,
    bucket_index: u32,
    stream_seed: u64,
) -> Result<Bucket> {
    let n_labels = labels.len();
    let profiles: Vec<Vec<u32>> = data
        .iter()
        .map(|s| occurrence_profile(s, labels))
        .collect::<Result<_>>()?;

    let mut corpus_totals = vec![0u64; n_labels];
    for profile in &profiles {
        for (l, &c) in profile.iter().enumerate() {
            corpus_totals[l] += u64::from(c);
        }
    }
    for (l, &total) in corpus_totals.iter().enumerate() {
        if total < u64::from(k) {
            return Err(SamplerError::CoverageImpossible {
                label: labels.name(LabelId(l as u32)).to_string(),
                occurrences: total as usize,
                needed: k as usize,
            });
        }
    }

    let mut rng = rng_from(stream_seed);
    let mut counts = vec![0u64; n_labels];
    let mut in_bucket = vec![false; data.len()];
    let mut chosen: Vec<usize> = Vec::new();

    for l in 0..n_labels {
        while counts[l] < u64::from(k) {
            let candidates: Vec<usize> = (0..data.len())
                .filter(|&i| !in_bucket[i] && profiles[i][l] > 0)
                .collect();
            // non-empty: corpus totals were checked against k above
            let pick = candidates[rng.gen_range(0..candidates.len())];
            in_bucket[pick] = true;
            chosen.push(pick);
            for (lab, &c) in profiles[pick].iter().enumerate() {
                counts[lab] += u64::from(c);
            }
        }
    }

    // Removal pass, insertion order: drop an item iff coverage survives.
    let mut kept = vec![true; chosen.len()];
    for (pos, &i) in chosen.iter().enumerate() {
        let survives = (0..n_labels)
            .all(|l| counts[l] - u64::from(profiles[i][l]) >= u64::from(k));
        if survives {
            kept[pos] = false;
            for (l, &c) in profiles[i].iter().enumerate() {
                counts[l] -= u64::from(c);
            }
        }
    }

    let mut items = Vec::new();
    let mut source_indices = Vec::new();
    for (pos, &i) in chosen.iter().enumerate() {
        if kept[pos] {
            items.push(BucketItem::Seq(data[i].clone()));
            source_indices.push(i);
        }
    }
    Ok(Bucket {
        task: task.to_string(),
        language: language.to_string(),
        k,
        bucket_index,
        seed: master_seed,
        kind: BucketKind::Sequence,
        items,
        source_indices,
    })
}

/// Samples `cfg.count` independent minimum-including buckets. Buckets may
/// overlap; each uses its own derived seed so the set is reproducible
/// regardless of evaluation order.
pub fn sample_seq_buckets(
    task: &str,
    language: &str,
    data: &[Sentence],
    labels: &LabelSet,
    cfg: &SamplingConfig,
) -> Result<Vec<Bucket>> {
    cfg.validate()?;
    (0..cfg.count)
        .map(|i| {
            minimum_including_indexed(
                task,
                language,
                data,
                labels,
                cfg.k,
                cfg.seed,
                i,
                mix64(cfg.seed, u64::from(i)),
            )
        })
        .collect()
}

/// Outcome of checking a bucket against the two sampling criteria.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    /// Every label occurs at least k times.
    pub coverage: bool,
    /// No single item can be removed without breaking coverage.
    pub minimality: bool,
    /// Item positions (within the bucket) that could be removed.
    pub offenders: Vec<usize>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.coverage && self.minimality
    }
}

/// Recounts a bucket from scratch and checks coverage and minimality.
/// Works for both kinds; a classification item counts as one occurrence
/// of its label.
pub fn verify_bucket(bucket: &Bucket, labels: &LabelSet, k: u32) -> Result<VerifyReport> {
    let n_labels = labels.len();
    let mut item_profiles: Vec<Vec<u32>> = Vec::with_capacity(bucket.items.len());
    for item in &bucket.items {
        let mut profile = vec![0u32; n_labels];
        for label in item.label_occurrences() {
            profile[labels.require(label)?.0 as usize] += 1;
        }
        item_profiles.push(profile);
    }
    let mut counts = vec![0u64; n_labels];
    for profile in &item_profiles {
        for (l, &c) in profile.iter().enumerate() {
            counts[l] += u64::from(c);
        }
    }
    let coverage = counts.iter().all(|&c| c >= u64::from(k));
    let offenders: Vec<usize> = if coverage {
        item_profiles
            .iter()
            .enumerate()
            .filter(|(_, profile)| {
                (0..n_labels).all(|l| counts[l] - u64::from(profile[l]) >= u64::from(k))
            })
            .map(|(i, _)| i)
            .collect()
    } else {
        Vec::new()
    };
    Ok(VerifyReport {
        coverage,
        minimality: offenders.is_empty(),
        offenders,
    })
}

/// Writes buckets as JSON Lines; this is the published bucket file format.
pub fn write_buckets_jsonl<W: Write>(mut writer: W, buckets: &[Bucket]) -> Result<()> {
    for bucket in buckets {
        serde_json::to_writer(&mut writer, bucket).map_err(|source| SamplerError::Json {
            line: bucket.bucket_index as usize + 1,
            source,
        })?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn buckets_to_jsonl(buckets: &[Bucket]) -> Result<String> {
    let mut out = Vec::new();
    write_buckets_jsonl(&mut out, buckets)?;
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

pub fn read_buckets_jsonl<R: BufRead>(reader: R) -> Result<Vec<Bucket>> {
    let mut buckets = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bucket: Bucket = serde_json::from_str(&line)
            .map_err(|source| SamplerError::Json { line: i + 1, source })?;
        buckets.push(bucket);
    }
    Ok(buckets)
}
