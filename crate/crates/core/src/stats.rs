//! Aggregation of per-bucket runs into reporting statistics: mean ± std,
//! max differences, histograms, gains over zero-shot, and rank/linear
//! correlations.
//!
//! Standard deviations use the sample (n−1) denominator throughout, the
//! convention for reporting over repeated runs. Table cells render as
//! `MM.MM ± S.SS` in percent with two decimals.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("cannot aggregate an empty score list")]
    EmptyInput,
    #[error("x has {x} values but y has {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("need at least two points for a correlation, got {0}")]
    TooFewPoints(usize),
    #[error("correlation undefined: {0} has zero variance")]
    UndefinedCorrelation(&'static str),
    #[error("inputs must be finite")]
    NonFinite,
    #[error("bin width must be positive, got {0}")]
    InvalidBinWidth(f64),
    #[error("run result invalid: {0}")]
    InvalidRun(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("trace file line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// One (bucket, variant, learning-rate, seed) adaptation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub task: String,
    pub language: String,
    pub k: u32,
    pub bucket_index: u32,
    pub variant: String,
    pub learning_rate: f64,
    pub seed: u64,
    pub best_dev_score: f64,
    pub test_score: f64,
    /// 1-based epoch of the best dev score (earliest on ties).
    pub best_epoch: u32,
    pub per_epoch_dev_trace: Vec<f64>,
}

impl RunResult {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(self.best_dev_score) || !in_unit(self.test_score) {
            return Err(StatsError::InvalidRun("scores must lie in [0,1]".into()));
        }
        if self.best_epoch == 0 || self.best_epoch as usize > self.per_epoch_dev_trace.len() {
            return Err(StatsError::InvalidRun(format!(
                "best_epoch {} outside trace of length {}",
                self.best_epoch,
                self.per_epoch_dev_trace.len()
            )));
        }
        let max = self
            .per_epoch_dev_trace
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        if self.best_dev_score != max {
            return Err(StatsError::InvalidRun(
                "best_dev_score must equal the trace maximum".into(),
            ));
        }
        Ok(())
    }
}

/// Summary of a score list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub mean: f64,
    /// Sample standard deviation (n−1 denominator); 0 for n = 1.
    pub std_sample: f64,
    pub min: f64,
    pub max: f64,
    pub max_diff: f64,
    pub n: usize,
}

impl AggregateReport {
    /// Renders `MM.MM ± S.SS` (percent, two decimals).
    pub fn display_cell(&self) -> String {
        format_mean_std(self.mean, self.std_sample)
    }
}

/// Table-cell format for a (mean, std) pair in fraction units.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{:.2} ± {:.2}", mean * 100.0, std * 100.0)
}

/// Mean, sample std, extremes, and max difference of a score list.
pub fn aggregate(scores: &[f64]) -> Result<AggregateReport> {
    if scores.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if scores.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = scores.len();
    let mean = scores.iter().sum::<f64>() / n as f64;
    let std_sample = if n == 1 {
        0.0
    } else {
        let ss = scores.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
        (ss / (n as f64 - 1.0)).sqrt()
    };
    let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(AggregateReport {
        mean,
        std_sample,
        min,
        max,
        max_diff: max - min,
        n,
    })
}

/// Shardable running aggregate; merging shards reproduces the whole.
/// The two-pass [`aggregate`] is the reference route for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub n: u64,
    pub sum: f64,
    pub sumsq: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for RunningStats {
    fn default() -> Self {
        Self {
            n: 0,
            sum: 0.0,
            sumsq: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sumsq += x * x;
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        self.n += other.n;
        self.sum += other.sum;
        self.sumsq += other.sumsq;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    pub fn std_sample(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let var = (self.sumsq - self.sum * self.sum / n) / (n - 1.0);
        var.max(0.0).sqrt()
    }
}

/// Left-closed right-open bins over `[min, max]`; empty bins are omitted,
/// so the returned counts always sum to the input length. A value within
/// 1e-9 bins of the next edge is assigned upward, keeping decimal-friendly
/// inputs in their intuitive bin.
pub fn histogram(scores: &[f64], bin_width: f64) -> Result<Vec<(f64, u64)>> {
    if !(bin_width > 0.0) {
        return Err(StatsError::InvalidBinWidth(bin_width));
    }
    if scores.is_empty() {
        return Ok(Vec::new());
    }
    let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut counts = std::collections::BTreeMap::new();
    for &x in scores {
        let idx = ((x - min) / bin_width + 1e-9).floor() as u64;
        *counts.entry(idx).or_insert(0u64) += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(idx, count)| (min + idx as f64 * bin_width, count))
        .collect())
}

/// Improvement of few-shot over a zero-shot constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gain {
    pub delta_mean: f64,
    /// The few-shot std; zero-shot is a constant and adds no spread.
    pub delta_std: f64,
}

pub fn gain(fs: &AggregateReport, zs_score: f64) -> Gain {
    Gain {
        delta_mean: fs.mean - zs_score,
        delta_std: fs.std_sample,
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(StatsError::TooFewPoints(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::UndefinedCorrelation("x"));
    }
    if syy == 0.0 {
        return Err(StatsError::UndefinedCorrelation("y"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// 1-based ranks; ties share the average of their rank range.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite inputs"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Rank correlation: Pearson correlation of average-rank vectors.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// CSV row with the published results schema and column order. Unlike
/// [`RunResult`] it carries no per-epoch trace; traces live in the JSONL
/// sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub task: String,
    pub language: String,
    pub k: u32,
    pub bucket: u32,
    pub variant: String,
    pub lr: f64,
    pub seed: u64,
    pub dev: f64,
    pub test: f64,
    pub epoch: u32,
}

impl From<&RunResult> for ResultRow {
    fn from(r: &RunResult) -> Self {
        Self {
            task: r.task.clone(),
            language: r.language.clone(),
            k: r.k,
            bucket: r.bucket_index,
            variant: r.variant.clone(),
            lr: r.learning_rate,
            seed: r.seed,
            dev: r.best_dev_score,
            test: r.test_score,
            epoch: r.best_epoch,
        }
    }
}

pub const RESULTS_CSV_HEADER: &str = "task,language,k,bucket,variant,lr,seed,dev,test,epoch";

/// Writes results rows; traces go to the JSONL sidecar, not the CSV.
pub fn write_results_csv<W: Write>(writer: W, results: &[RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in results {
        w.serialize(ResultRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads result rows back from a CSV.
pub fn read_results_csv<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// One line of the per-epoch trace sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub task: String,
    pub language: String,
    pub k: u32,
    pub bucket: u32,
    pub variant: String,
    pub lr: f64,
    pub seed: u64,
    pub trace: Vec<f64>,
}

impl From<&RunResult> for TraceRecord {
    fn from(r: &RunResult) -> Self {
        Self {
            task: r.task.clone(),
            language: r.language.clone(),
            k: r.k,
            bucket: r.bucket_index,
            variant: r.variant.clone(),
            lr: r.learning_rate,
            seed: r.seed,
            trace: r.per_epoch_dev_trace.clone(),
        }
    }
}

pub fn write_traces_jsonl<W: Write>(mut writer: W, results: &[RunResult]) -> Result<()> {
    for (i, r) in results.iter().enumerate() {
        serde_json::to_writer(&mut writer, &TraceRecord::from(r))
            .map_err(|source| StatsError::Json { line: i + 1, source })?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_traces_jsonl<R: BufRead>(reader: R) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|source| StatsError::Json { line: i + 1, source })?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_of_constant_scores() {
        let scores = vec![0.5; 40];
        let report = aggregate(&scores).unwrap();
        assert_eq!(report.mean, 0.5);
        assert_eq!(report.std_sample, 0.0);
        assert_eq!(report.max_diff, 0.0);
        assert_eq!(report.n, 40);
    }

    #[test]
    fn aggregate_closed_form_example() {
        let report = aggregate(&[0.1, 0.2, 0.3]).unwrap();
        assert!((report.mean - 0.2).abs() < 1e-15);
        // sample std of {0.1,0.2,0.3} is exactly 0.1 in real arithmetic;
        // IEEE doubles land within one ulp of it
        assert!((report.std_sample - 0.1).abs() <= f64::EPSILON);
        assert!((report.max_diff - 0.2).abs() < 1e-15);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn cell_format_matches_reporting_convention() {
        assert_eq!(format_mean_std(0.5150, 0.0158), "51.50 ± 1.58");
        assert_eq!(format_mean_std(0.9036, 0.0148), "90.36 ± 1.48");
    }

    #[test]
    fn aggregate_is_permutation_invariant_up_to_rounding() {
        use rand::Rng;
        let mut rng = crate::seed::rng_from(2);
        let scores: Vec<f64> = (0..50).map(|_| rng.gen::<f64>()).collect();
        let mut reversed = scores.clone();
        reversed.reverse();
        let a = aggregate(&scores).unwrap();
        let b = aggregate(&reversed).unwrap();
        assert!((a.mean - b.mean).abs() < 1e-12);
        assert!((a.std_sample - b.std_sample).abs() < 1e-12);
        assert_eq!(a.min, b.min);
        assert_eq!(a.max, b.max);
    }

    #[test]
    fn running_stats_merge_matches_two_pass() {
        use rand::Rng;
        let mut rng = crate::seed::rng_from(8);
        let scores: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
        let mut left = RunningStats::default();
        let mut right = RunningStats::default();
        for (i, &x) in scores.iter().enumerate() {
            if i % 2 == 0 {
                left.push(x);
            } else {
                right.push(x);
            }
        }
        left.merge(&right);
        let reference = aggregate(&scores).unwrap();
        assert!((left.mean() - reference.mean).abs() < 1e-12);
        assert!((left.std_sample() - reference.std_sample).abs() < 1e-9);
        assert_eq!(left.min, reference.min);
        assert_eq!(left.max, reference.max);
    }

    #[test]
    fn histogram_bins_and_conserves_counts() {
        let bins = histogram(&[0.4; 7], 0.05).unwrap();
        assert_eq!(bins, vec![(0.4, 7)]);

        let bins = histogram(&[0.1, 0.15, 0.3], 0.1).unwrap();
        assert_eq!(bins.len(), 2);
        assert!((bins[0].0 - 0.1).abs() < 1e-12);
        assert_eq!(bins[0].1, 2);
        assert!((bins[1].0 - 0.3).abs() < 1e-9);
        assert_eq!(bins[1].1, 1);

        use rand::Rng;
        let mut rng = crate::seed::rng_from(4);
        for _ in 0..50 {
            let n = rng.gen_range(1..100);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let bins = histogram(&scores, 0.07).unwrap();
            assert_eq!(bins.iter().map(|(_, c)| *c).sum::<u64>(), n as u64);
        }

        assert!(histogram(&[0.1], 0.0).is_err());
    }

    #[test]
    fn gain_subtracts_the_zero_shot_constant() {
        let fs = aggregate(&[0.7, 0.7, 0.7]).unwrap();
        assert_eq!(gain(&fs, fs.mean).delta_mean, 0.0);

        // 52.40 zero-shot to 74.95 one-shot mean is a 22.55-point gain
        let fs = AggregateReport {
            mean: 0.7495,
            std_sample: 0.0215,
            min: 0.7,
            max: 0.8,
            max_diff: 0.1,
            n: 40,
        };
        let g = gain(&fs, 0.5240);
        assert!((g.delta_mean - 0.2255).abs() < 1e-12);
        assert_eq!(g.delta_std, fs.std_sample);
    }

    #[test]
    fn gain_is_shift_invariant() {
        use rand::Rng;
        let mut rng = crate::seed::rng_from(12);
        let scores: Vec<f64> = (0..30).map(|_| rng.gen::<f64>() * 0.5).collect();
        let zs = 0.3;
        let c = 0.17;
        let base = gain(&aggregate(&scores).unwrap(), zs);
        let shifted_scores: Vec<f64> = scores.iter().map(|x| x + c).collect();
        let shifted = gain(&aggregate(&shifted_scores).unwrap(), zs + c);
        assert!((base.delta_mean - shifted.delta_mean).abs() < 1e-12);
    }

    #[test]
    fn spearman_known_values() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        let rho = spearman(&[1.0, 2.0, 3.0], &[6.0, 4.0, 5.0]).unwrap();
        assert!((rho - (-0.5)).abs() < 1e-12);
        // sign flips when y is negated
        let neg = spearman(&[1.0, 2.0, 3.0], &[-6.0, -4.0, -5.0]).unwrap();
        assert!((neg + rho).abs() < 1e-12);
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(StatsError::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn spearman_average_ranks_for_ties() {
        // ranks of x: [1, 2.5, 2.5, 4]
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![1.0, 2.5, 2.5, 4.0]);
        let rho = spearman(&[1.0, 2.0, 2.0, 3.0], &[10.0, 20.0, 20.0, 30.0]).unwrap();
        assert!((rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_is_invariant_under_monotone_transforms() {
        use rand::Rng;
        let mut rng = crate::seed::rng_from(9);
        for _ in 0..50 {
            let n = rng.gen_range(3..20);
            let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let rho = spearman(&x, &y).unwrap();
            let x_exp: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            let y_cub: Vec<f64> = y.iter().map(|v| v * v * v + 2.0).collect();
            let rho_t = spearman(&x_exp, &y_cub).unwrap();
            assert!((rho - rho_t).abs() < 1e-9);
        }
    }

    #[test]
    fn pearson_known_values() {
        let x = [1.0, 2.0, 3.0];
        let affine: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &affine).unwrap() - 1.0).abs() < 1e-12);
        let r = pearson(&x, &[1.0, 4.0, 9.0]).unwrap();
        assert!((r - 0.9897).abs() < 1e-4);
        assert!(matches!(
            pearson(&[1.0, 1.0], &[1.0, 2.0]),
            Err(StatsError::UndefinedCorrelation(_))
        ));
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn pearson_is_bounded_and_affine_invariant() {
        use rand::Rng;
        let mut rng = crate::seed::rng_from(14);
        for _ in 0..100 {
            let n = rng.gen_range(2..25);
            let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 10.0).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 10.0).collect();
            match pearson(&x, &y) {
                Ok(r) => {
                    assert!(r.abs() <= 1.0 + 1e-12);
                    let x2: Vec<f64> = x.iter().map(|v| 3.0 * v + 5.0).collect();
                    let r2 = pearson(&x2, &y).unwrap();
                    assert!((r - r2).abs() < 1e-9);
                }
                Err(StatsError::UndefinedCorrelation(_)) => {}
                Err(e) => panic!("unexpected error {e:?}"),
            }
        }
    }

    fn run(bucket: u32, dev: f64) -> RunResult {
        RunResult {
            task: "marc".into(),
            language: "de".into(),
            k: 1,
            bucket_index: bucket,
            variant: "full".into(),
            learning_rate: 0.003,
            seed: 7,
            best_dev_score: dev,
            test_score: dev - 0.01,
            best_epoch: 2,
            per_epoch_dev_trace: vec![dev - 0.05, dev, dev - 0.02],
        }
    }

    #[test]
    fn results_csv_round_trips_with_pinned_header() {
        let results = vec![run(0, 0.515), run(1, 0.53)];
        let mut buf = Vec::new();
        write_results_csv(&mut buf, &results).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), RESULTS_CSV_HEADER);
        let back = read_results_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].dev, 0.515);
        assert_eq!(back[1].bucket, 1);
        assert_eq!(back[0], ResultRow::from(&results[0]));
    }

    #[test]
    fn run_result_validation_catches_contract_breaks() {
        let mut r = run(0, 0.5);
        r.validate().unwrap();
        r.best_epoch = 9;
        assert!(r.validate().is_err());
        let mut r = run(0, 0.5);
        r.best_dev_score = 0.9; // no longer the trace max
        assert!(r.validate().is_err());
        let mut r = run(0, 0.5);
        r.test_score = 1.5;
        assert!(r.validate().is_err());
    }

    #[test]
    fn traces_jsonl_round_trips() {
        let results = vec![run(0, 0.5)];
        let mut buf = Vec::new();
        write_traces_jsonl(&mut buf, &results).unwrap();
        let records = read_traces_jsonl(&buf[..]).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].trace, results[0].per_epoch_dev_trace);
    }
}
