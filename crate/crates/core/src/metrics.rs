//! Task scoring: accuracy, chunk-level entity F1, token-level F1, and
//! confusion matrices.
//!
//! Entity F1 is micro-averaged over exact-match chunks (type and span).
//! Ill-formed BIO input is repaired on the fly: an orphan `I-X` starts a
//! new chunk, and 0/0 precision or recall is defined as 0, matching the
//! common sequence-evaluation convention.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LabelSet;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("gold has {gold} entries but pred has {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("sequence {index}: gold has {gold} tokens but pred has {pred}")]
    SequenceMismatch {
        index: usize,
        gold: usize,
        pred: usize,
    },
    #[error("cannot score an empty input")]
    EmptyInput,
    #[error("label {0:?} is not in the task's label set")]
    UnknownLabel(String),
    #[error("confusion matrices disagree in size ({0} vs {1})")]
    ShapeMismatch(usize, usize),
    #[error("prediction file line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Fraction of positions where gold and pred agree.
pub fn accuracy<S: AsRef<str>, T: AsRef<str>>(gold: &[S], pred: &[T]) -> Result<f64> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let correct = gold
        .iter()
        .zip(pred)
        .filter(|(g, p)| g.as_ref() == p.as_ref())
        .count();
    Ok(correct as f64 / gold.len() as f64)
}

/// A labeled span; `end` is inclusive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Chunk {
    pub entity_type: String,
    pub start: usize,
    pub end: usize,
}

/// Extracts maximal same-type B/I runs. Orphan `I-X` labels (no preceding
/// `B-X`/`I-X`) are repaired to start a new chunk; any label that is not
/// `B-`/`I-` prefixed counts as outside.
pub fn extract_chunks<S: AsRef<str>>(labels: &[S]) -> BTreeSet<Chunk> {
    let mut chunks = BTreeSet::new();
    let mut current: Option<(String, usize)> = None;
    for (i, raw) in labels.iter().enumerate() {
        let label = raw.as_ref();
        if let Some(t) = label.strip_prefix("B-") {
            if let Some((entity_type, start)) = current.take() {
                chunks.insert(Chunk {
                    entity_type,
                    start,
                    end: i - 1,
                });
            }
            current = Some((t.to_string(), i));
        } else if let Some(t) = label.strip_prefix("I-") {
            let continues = matches!(&current, Some((ty, _)) if ty == t);
            if !continues {
                if let Some((entity_type, start)) = current.take() {
                    chunks.insert(Chunk {
                        entity_type,
                        start,
                        end: i - 1,
                    });
                }
                current = Some((t.to_string(), i));
            }
        } else if let Some((entity_type, start)) = current.take() {
            chunks.insert(Chunk {
                entity_type,
                start,
                end: i - 1,
            });
        }
    }
    if let Some((entity_type, start)) = current {
        chunks.insert(Chunk {
            entity_type,
            start,
            end: labels.len() - 1,
        });
    }
    chunks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrfScores {
    fn from_counts(tp: usize, n_pred: usize, n_gold: usize) -> Self {
        let precision = if n_pred == 0 {
            0.0
        } else {
            tp as f64 / n_pred as f64
        };
        let recall = if n_gold == 0 {
            0.0
        } else {
            tp as f64 / n_gold as f64
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

fn check_alignment<S: AsRef<str>, T: AsRef<str>>(
    gold_seqs: &[Vec<S>],
    pred_seqs: &[Vec<T>],
) -> Result<()> {
    if gold_seqs.len() != pred_seqs.len() {
        return Err(MetricsError::LengthMismatch {
            gold: gold_seqs.len(),
            pred: pred_seqs.len(),
        });
    }
    for (index, (g, p)) in gold_seqs.iter().zip(pred_seqs).enumerate() {
        if g.len() != p.len() {
            return Err(MetricsError::SequenceMismatch {
                index,
                gold: g.len(),
                pred: p.len(),
            });
        }
    }
    Ok(())
}

/// Micro-averaged chunk F1 over aligned BIO sequences. A chunk counts as
/// a true positive only on exact type and span match.
pub fn entity_f1<S: AsRef<str>, T: AsRef<str>>(
    gold_seqs: &[Vec<S>],
    pred_seqs: &[Vec<T>],
) -> Result<PrfScores> {
    check_alignment(gold_seqs, pred_seqs)?;
    let mut tp = 0;
    let mut n_pred = 0;
    let mut n_gold = 0;
    for (g, p) in gold_seqs.iter().zip(pred_seqs) {
        let gold_chunks = extract_chunks(g);
        let pred_chunks = extract_chunks(p);
        tp += gold_chunks.intersection(&pred_chunks).count();
        n_gold += gold_chunks.len();
        n_pred += pred_chunks.len();
    }
    Ok(PrfScores::from_counts(tp, n_pred, n_gold))
}

/// Micro-averaged token-level F1. With exactly one prediction per token a
/// mismatch is simultaneously a false positive and a false negative, so
/// precision, recall, and F1 all coincide.
pub fn token_f1<S: AsRef<str>, T: AsRef<str>>(
    gold_seqs: &[Vec<S>],
    pred_seqs: &[Vec<T>],
) -> Result<f64> {
    check_alignment(gold_seqs, pred_seqs)?;
    let mut tp = 0usize;
    let mut total = 0usize;
    for (g, p) in gold_seqs.iter().zip(pred_seqs) {
        for (gl, pl) in g.iter().zip(p) {
            if gl.as_ref() == pl.as_ref() {
                tp += 1;
            }
            total += 1;
        }
    }
    if total == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let fp = total - tp;
    let fns = total - tp;
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fns) as f64;
    // fp == fn here, so P == R and their harmonic mean is that same value
    Ok(if precision + recall > 0.0 {
        debug_assert_eq!(precision, recall);
        precision
    } else {
        0.0
    })
}

/// Gold-by-predicted count grid; rows are gold classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n: usize,
    pub cells: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n).map(|i| self.cells[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// Cell-wise mean over several matrices, rounded half-up to integers.
    /// This is the aggregation used when reporting an averaged matrix over
    /// multiple runs.
    pub fn mean_round(matrices: &[ConfusionMatrix]) -> Result<ConfusionMatrix> {
        let first = matrices.first().ok_or(MetricsError::EmptyInput)?;
        let n = first.n;
        for m in matrices {
            if m.n != n {
                return Err(MetricsError::ShapeMismatch(n, m.n));
            }
        }
        let count = matrices.len() as f64;
        let cells = (0..n)
            .map(|g| {
                (0..n)
                    .map(|p| {
                        let mean =
                            matrices.iter().map(|m| m.cells[g][p] as f64).sum::<f64>() / count;
                        (mean + 0.5).floor() as u64
                    })
                    .collect()
            })
            .collect();
        Ok(ConfusionMatrix { n, cells })
    }
}

/// Counts gold/pred label pairs. Every observed label must be in the set.
pub fn confusion<S: AsRef<str>, T: AsRef<str>>(
    gold: &[S],
    pred: &[T],
    labels: &LabelSet,
) -> Result<ConfusionMatrix> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let n = labels.len();
    let mut cells = vec![vec![0u64; n]; n];
    for (g, p) in gold.iter().zip(pred) {
        let gi = labels
            .id(g.as_ref())
            .ok_or_else(|| MetricsError::UnknownLabel(g.as_ref().to_string()))?;
        let pi = labels
            .id(p.as_ref())
            .ok_or_else(|| MetricsError::UnknownLabel(p.as_ref().to_string()))?;
        cells[gi.0 as usize][pi.0 as usize] += 1;
    }
    Ok(ConfusionMatrix { n, cells })
}

/// Gold or predicted side of one prediction record: a single class label
/// or a per-token label sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Labels {
    One(String),
    Seq(Vec<String>),
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: u64,
    pub gold: Labels,
    pub pred: Labels,
}

pub fn write_predictions_jsonl<W: Write>(
    mut writer: W,
    records: &[PredictionRecord],
) -> Result<()> {
    for (i, record) in records.iter().enumerate() {
        serde_json::to_writer(&mut writer, record)
            .map_err(|source| MetricsError::Json { line: i + 1, source })?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_predictions_jsonl<R: BufRead>(reader: R) -> Result<Vec<PredictionRecord>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line)
                .map_err(|source| MetricsError::Json { line: i + 1, source })?,
        );
    }
    Ok(records)
}

/// A flat name/value report, rendered as JSON or aligned columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<(String, f64)>,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        let map: serde_json::Map<String, serde_json::Value> = self
            .rows
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::json!(v)))
            .collect();
        serde_json::Value::Object(map).to_string()
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in &self.rows {
            out.push_str(&format!("{k:<width$}  {v:.4}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelKind;

    fn seq(labels: &[&str]) -> Vec<String> {
        labels.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn accuracy_counts_matches() {
        assert_eq!(accuracy(&["a", "b"], &["a", "b"]).unwrap(), 1.0);
        let acc = accuracy(&["1", "2", "3"], &["1", "2", "4"]).unwrap();
        assert!((acc - 2.0 / 3.0).abs() < 1e-12);
        assert!(accuracy(&["a"], &["a", "b"]).is_err());
        assert!(accuracy::<&str, &str>(&[], &[]).is_err());
    }

    #[test]
    fn accuracy_matches_position_recount() {
        use rand::Rng;
        let mut rng = crate::seed::rng_from(31);
        for _ in 0..200 {
            let n = rng.gen_range(1..30);
            let gold: Vec<String> = (0..n).map(|_| rng.gen_range(0..4).to_string()).collect();
            let pred: Vec<String> = (0..n).map(|_| rng.gen_range(0..4).to_string()).collect();
            let mut equal = 0usize;
            for i in 0..n {
                if gold[i] == pred[i] {
                    equal += 1;
                }
            }
            assert_eq!(accuracy(&gold, &pred).unwrap(), equal as f64 / n as f64);
        }
    }

    #[test]
    fn extract_chunks_basic_runs() {
        let chunks = extract_chunks(&["B-PER", "I-PER", "O", "B-LOC"]);
        let expected: BTreeSet<Chunk> = [
            Chunk {
                entity_type: "PER".into(),
                start: 0,
                end: 1,
            },
            Chunk {
                entity_type: "LOC".into(),
                start: 3,
                end: 3,
            },
        ]
        .into_iter()
        .collect();
        assert_eq!(chunks, expected);
        assert!(extract_chunks(&["O", "O", "O"]).is_empty());
    }

    #[test]
    fn extract_chunks_repairs_orphan_inside() {
        let chunks = extract_chunks(&["I-PER", "I-PER", "B-PER"]);
        let spans: Vec<(usize, usize)> = chunks.iter().map(|c| (c.start, c.end)).collect();
        assert_eq!(spans, vec![(0, 1), (2, 2)]);
        // type switch inside an I-run starts a fresh chunk
        let chunks = extract_chunks(&["B-ORG", "I-LOC"]);
        let got: Vec<(&str, usize, usize)> = chunks
            .iter()
            .map(|c| (c.entity_type.as_str(), c.start, c.end))
            .collect();
        assert_eq!(got, vec![("LOC", 1, 1), ("ORG", 0, 0)]);
    }

    #[test]
    fn extract_chunks_never_overlap() {
        use rand::Rng;
        let alphabet = ["O", "B-X", "I-X", "B-Y", "I-Y"];
        let mut rng = crate::seed::rng_from(17);
        for _ in 0..500 {
            let n = rng.gen_range(1..12);
            let labels: Vec<&str> = (0..n).map(|_| alphabet[rng.gen_range(0..5)]).collect();
            let chunks: Vec<Chunk> = extract_chunks(&labels).into_iter().collect();
            let mut covered = vec![false; n];
            for c in &chunks {
                for slot in covered.iter_mut().take(c.end + 1).skip(c.start) {
                    assert!(!*slot, "overlapping chunks in {labels:?}");
                    *slot = true;
                }
            }
        }
    }

    #[test]
    fn entity_f1_exact_and_partial() {
        let gold = vec![seq(&["B-PER", "I-PER", "O", "B-LOC"])];
        let perfect = entity_f1(&gold, &gold).unwrap();
        assert_eq!(perfect.f1, 1.0);

        let pred = vec![seq(&["B-PER", "O", "O", "B-LOC"])];
        let scores = entity_f1(&gold, &pred).unwrap();
        assert_eq!(scores.precision, 0.5);
        assert_eq!(scores.recall, 0.5);
        assert_eq!(scores.f1, 0.5);
    }

    #[test]
    fn entity_f1_zero_prediction_convention() {
        let gold = vec![seq(&["B-PER", "O"])];
        let pred = vec![seq(&["O", "O"])];
        let scores = entity_f1(&gold, &pred).unwrap();
        assert_eq!(scores.precision, 0.0);
        assert_eq!(scores.recall, 0.0);
        assert_eq!(scores.f1, 0.0);
    }

    #[test]
    fn entity_f1_rejects_misalignment() {
        let gold = vec![seq(&["O", "O"])];
        let pred = vec![seq(&["O"])];
        assert!(matches!(
            entity_f1(&gold, &pred),
            Err(MetricsError::SequenceMismatch { index: 0, .. })
        ));
    }

    #[test]
    fn entity_f1_is_permutation_invariant() {
        let gold = vec![
            seq(&["B-X", "O"]),
            seq(&["B-Y", "I-Y", "O"]),
            seq(&["O", "B-X", "I-X"]),
        ];
        let pred = vec![
            seq(&["B-X", "B-X"]),
            seq(&["B-Y", "O", "O"]),
            seq(&["O", "B-X", "I-X"]),
        ];
        let forward = entity_f1(&gold, &pred).unwrap();
        let gold_rev: Vec<_> = gold.into_iter().rev().collect();
        let pred_rev: Vec<_> = pred.into_iter().rev().collect();
        let backward = entity_f1(&gold_rev, &pred_rev).unwrap();
        assert_eq!(forward, backward);
    }

    #[test]
    fn token_f1_equals_flat_accuracy() {
        use rand::Rng;
        let mut rng = crate::seed::rng_from(21);
        for _ in 0..100 {
            let n_seqs = rng.gen_range(1..6);
            let mut gold = Vec::new();
            let mut pred = Vec::new();
            for _ in 0..n_seqs {
                let len = rng.gen_range(1..8);
                gold.push(
                    (0..len)
                        .map(|_| rng.gen_range(0..3).to_string())
                        .collect::<Vec<_>>(),
                );
                pred.push(
                    (0..len)
                        .map(|_| rng.gen_range(0..3).to_string())
                        .collect::<Vec<_>>(),
                );
            }
            let flat_gold: Vec<String> = gold.iter().flatten().cloned().collect();
            let flat_pred: Vec<String> = pred.iter().flatten().cloned().collect();
            assert_eq!(
                token_f1(&gold, &pred).unwrap(),
                accuracy(&flat_gold, &flat_pred).unwrap()
            );
        }
        let identical = vec![seq(&["A", "B"])];
        assert_eq!(token_f1(&identical, &identical).unwrap(), 1.0);
    }

    #[test]
    fn confusion_counts_and_aggregates() {
        let labels = LabelSet::new(
            vec!["a".into(), "b".into()],
            LabelKind::Classification,
        )
        .unwrap();
        let m = confusion(&["a", "a", "b"], &["a", "b", "b"], &labels).unwrap();
        assert_eq!(m.cells, vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(m.total(), 3);
        assert!((m.accuracy() - accuracy(&["a", "a", "b"], &["a", "b", "b"]).unwrap()).abs() < 1e-15);

        assert!(matches!(
            confusion(&["a", "zzz"], &["a", "a"], &labels),
            Err(MetricsError::UnknownLabel(_))
        ));

        // perfect prediction is diagonal
        let d = confusion(&["a", "b", "b"], &["a", "b", "b"], &labels).unwrap();
        assert_eq!(d.cells[0][1] + d.cells[1][0], 0);
    }

    #[test]
    fn mean_round_uses_half_up() {
        let a = ConfusionMatrix {
            n: 1,
            cells: vec![vec![2]],
        };
        let b = ConfusionMatrix {
            n: 1,
            cells: vec![vec![3]],
        };
        // mean 2.5 rounds up to 3
        let avg = ConfusionMatrix::mean_round(&[a.clone(), b]).unwrap();
        assert_eq!(avg.cells[0][0], 3);
        let same = ConfusionMatrix::mean_round(&[a.clone(), a]).unwrap();
        assert_eq!(same.cells[0][0], 2);
    }

    #[test]
    fn confusion_cell_sum_matches_input_length() {
        use rand::Rng;
        let labels = LabelSet::new(
            vec!["0".into(), "1".into(), "2".into()],
            LabelKind::Classification,
        )
        .unwrap();
        let mut rng = crate::seed::rng_from(3);
        for _ in 0..50 {
            let n = rng.gen_range(1..40);
            let gold: Vec<String> = (0..n).map(|_| rng.gen_range(0..3).to_string()).collect();
            let pred: Vec<String> = (0..n).map(|_| rng.gen_range(0..3).to_string()).collect();
            let m = confusion(&gold, &pred, &labels).unwrap();
            assert_eq!(m.total(), n as u64);
        }
    }

    #[test]
    fn f1_is_harmonic_mean_when_defined() {
        let gold = vec![seq(&["B-X", "O", "B-Y"])];
        let pred = vec![seq(&["B-X", "B-Y", "O"])];
        let s = entity_f1(&gold, &pred).unwrap();
        if s.precision + s.recall > 0.0 {
            let hm = 2.0 * s.precision * s.recall / (s.precision + s.recall);
            assert!((s.f1 - hm).abs() < 1e-15);
        }
    }

    #[test]
    fn prediction_records_round_trip() {
        let records = vec![
            PredictionRecord {
                id: 0,
                gold: Labels::One("pos".into()),
                pred: Labels::One("neg".into()),
            },
            PredictionRecord {
                id: 1,
                gold: Labels::Seq(seq(&["O", "B-X"])),
                pred: Labels::Seq(seq(&["O", "O"])),
            },
        ];
        let mut buf = Vec::new();
        write_predictions_jsonl(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"id\":0,\"gold\":\"pos\",\"pred\":\"neg\"}"));
        assert_eq!(read_predictions_jsonl(&buf[..]).unwrap(), records);
    }
}
