//! Loss, analytic gradients, the two training stages, and checkpoints.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{ClsExample, LabelSet};
use crate::sampler::{Bucket, BucketItem};
use crate::seed::{mix64, rng_from};
use crate::stats::RunResult;

use super::model::{argmax, forward, AdaptVariant, Head, ModelConfig, ToyModel, NORM_EPS};
use super::optim::{adam_step, AdamParams, AdamState, Grads};
use super::{AdaptError, Result};

/// Training-stage hyperparameters. Source training runs a fixed number of
/// epochs with mini-batches; target adapting runs full-bucket batches for
/// up to `max_epochs` with dev-based early stopping after `patience`
/// non-improving epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Consecutive non-improving dev epochs before stopping. A value
    /// larger than `max_epochs` disables early stopping.
    pub patience: usize,
    pub source_epochs: usize,
    pub source_batch_size: usize,
    /// Base learning-rate grid, before scaling.
    pub lr_grid: Vec<f64>,
    /// Grid multiplier; a from-scratch small model needs larger steps than
    /// encoder finetuning, so the published grid is scaled up by default.
    pub lr_scale: f64,
    pub adam: AdamParams,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 50,
            patience: 10,
            source_epochs: 10,
            source_batch_size: 32,
            lr_grid: vec![1e-5, 3e-5, 5e-5, 7e-5],
            lr_scale: 100.0,
            adam: AdamParams::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(AdaptError::BadConfig("max_epochs must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(AdaptError::BadConfig("patience must be >= 1".into()));
        }
        if self.lr_grid.is_empty() {
            return Err(AdaptError::BadConfig("lr_grid must be non-empty".into()));
        }
        if self.source_batch_size == 0 {
            return Err(AdaptError::BadConfig("source_batch_size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn effective_lr_grid(&self) -> Vec<f64> {
        self.lr_grid.iter().map(|lr| lr * self.lr_scale).collect()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

// Index spaces for derived seed streams.
const SRC_STREAM: u64 = 0x0001_0000;
const ADAPT_STREAM: u64 = 0x0002_0000;

/// Pre-featurized labeled examples.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizedSet {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<usize>,
}

impl FeaturizedSet {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// Featurizes classification examples and interns their labels.
pub fn featurize_examples(
    examples: &[ClsExample],
    labels: &LabelSet,
    config: &ModelConfig,
) -> Result<FeaturizedSet> {
    let mut xs = Vec::with_capacity(examples.len());
    let mut ys = Vec::with_capacity(examples.len());
    for e in examples {
        xs.push(super::model::featurize(
            &e.full_text(),
            config.feature_dim,
            config.featurizer_seed,
        ));
        ys.push(labels.require(&e.label)?.0 as usize);
    }
    Ok(FeaturizedSet { xs, ys })
}

/// Argmax accuracy on a featurized set.
pub fn evaluate(model: &ToyModel, set: &FeaturizedSet) -> Result<f64> {
    if set.is_empty() {
        return Err(AdaptError::EmptyDev);
    }
    let mut correct = 0usize;
    for (x, &y) in set.xs.iter().zip(&set.ys) {
        if argmax(&forward(model, x)?.logits) == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / set.len() as f64)
}

fn first_nonfinite(model: &ToyModel, grads: &Grads) -> &'static str {
    let model_tensors: [(&'static str, &[f64]); 4] = [
        ("enc_w", &model.enc_w),
        ("enc_b", &model.enc_b),
        ("pool_w", &model.pool_w),
        ("pool_b", &model.pool_b),
    ];
    for (name, tensor) in model_tensors {
        if tensor.iter().any(|v| !v.is_finite()) {
            return name;
        }
    }
    for (name, tensor) in grads.tensors() {
        if tensor.iter().any(|v| !v.is_finite()) {
            return name;
        }
    }
    "logits"
}

/// Mean cross-entropy over the batch and analytic gradients under the
/// variant's trainable-parameter mask. Gradients of frozen tensors are
/// exactly zero.
pub fn loss_and_grads(
    model: &ToyModel,
    batch: &[(&[f64], usize)],
    variant: AdaptVariant,
) -> Result<(f64, Grads)> {
    if batch.is_empty() {
        return Err(AdaptError::EmptyBatch);
    }
    let (d, h, c) = (
        model.config.feature_dim,
        model.config.hidden_dim,
        model.config.classes,
    );
    let mut grads = Grads::zeros_like(model);
    let mut loss_sum = 0.0;

    for &(x, y) in batch {
        if y >= c {
            return Err(AdaptError::LabelOutOfRange { label: y, classes: c });
        }
        let fwd = forward(model, x)?;
        let max = fwd.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp_sum: f64 = fwd.logits.iter().map(|l| (l - max).exp()).sum();
        loss_sum += max + exp_sum.ln() - fwd.logits[y];

        // d(sum CE)/d logits = softmax - onehot
        let mut dlogits: Vec<f64> = fwd
            .logits
            .iter()
            .map(|l| (l - max).exp() / exp_sum)
            .collect();
        dlogits[y] -= 1.0;

        let mut dpooled = vec![0.0; h];
        match &model.head {
            Head::Fc { weight, .. } => {
                for i in 0..c {
                    let dl = dlogits[i];
                    for j in 0..h {
                        grads.head_w[i * h + j] += dl * fwd.pooled[j];
                        dpooled[j] += dl * weight[i * h + j];
                    }
                    grads.head_b[i] += dl;
                }
            }
            Head::Cos { weight, alpha } => {
                let p_norm = fwd.pooled.iter().map(|v| v * v).sum::<f64>().sqrt();
                debug_assert!(p_norm > NORM_EPS, "forward guards zero norms");
                for i in 0..c {
                    let w = &weight[i * h..(i + 1) * h];
                    let w_norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let cos = fwd.logits[i] / alpha;
                    let dl = dlogits[i] * alpha;
                    for j in 0..h {
                        let p_hat = fwd.pooled[j] / p_norm;
                        let w_hat = w[j] / w_norm;
                        dpooled[j] += dl * (w_hat - cos * p_hat) / p_norm;
                        grads.head_w[i * h + j] += dl * (p_hat - cos * w_hat) / w_norm;
                    }
                }
            }
        }

        // pooler backward
        let mut dencoded = vec![0.0; h];
        for i in 0..h {
            let dz = dpooled[i] * (1.0 - fwd.pooled[i] * fwd.pooled[i]);
            for j in 0..h {
                grads.pool_w[i * h + j] += dz * fwd.encoded[j];
                dencoded[j] += dz * model.pool_w[i * h + j];
            }
            grads.pool_b[i] += dz;
        }

        // encoder backward
        for i in 0..h {
            let dz = dencoded[i] * (1.0 - fwd.encoded[i] * fwd.encoded[i]);
            for j in 0..d {
                grads.enc_w[i * d + j] += dz * x[j];
            }
            grads.enc_b[i] += dz;
        }
    }

    grads.scale(1.0 / batch.len() as f64);
    if !variant.trains_encoder() {
        grads.enc_w.iter_mut().for_each(|g| *g = 0.0);
        grads.enc_b.iter_mut().for_each(|g| *g = 0.0);
    }
    if !variant.trains_pooler() {
        grads.pool_w.iter_mut().for_each(|g| *g = 0.0);
        grads.pool_b.iter_mut().for_each(|g| *g = 0.0);
    }

    let loss = loss_sum / batch.len() as f64;
    if !loss.is_finite() {
        return Err(AdaptError::Divergence {
            tensor: first_nonfinite(model, &grads),
        });
    }
    Ok((loss, grads))
}

/// Best-score tracker with strict-improvement patience. Earliest epoch
/// wins ties.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_improvement: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            since_improvement: 0,
        }
    }

    /// Records the dev score of a 1-based epoch; returns true when
    /// training should stop after this epoch.
    pub fn observe(&mut self, epoch: usize, score: f64) -> bool {
        if score > self.best {
            self.best = score;
            self.best_epoch = epoch;
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        self.since_improvement >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn improved_at(&self, epoch: usize) -> bool {
        self.best_epoch == epoch
    }
}

/// Outcome of source training: the selected checkpoint, its dev score,
/// and the grid learning rate that won.
#[derive(Debug, Clone)]
pub struct SourceOutcome {
    pub model: ToyModel,
    pub dev_score: f64,
    pub learning_rate: f64,
}

/// Stage 1: trains all parameters on source-language data for
/// `source_epochs` epochs with mini-batches, once per grid learning rate,
/// and keeps the checkpoint with the best dev score (first grid entry on
/// ties).
pub fn source_train(
    init: &ToyModel,
    train: &FeaturizedSet,
    dev: &FeaturizedSet,
    cfg: &TrainConfig,
) -> Result<SourceOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(AdaptError::EmptyBatch);
    }
    if dev.is_empty() {
        return Err(AdaptError::EmptyDev);
    }
    let mut best: Option<SourceOutcome> = None;
    for (li, lr) in cfg.effective_lr_grid().into_iter().enumerate() {
        let mut model = init.clone();
        let mut state = AdamState::new(&model);
        let mut rng = rng_from(mix64(cfg.seed, SRC_STREAM + li as u64));
        let mut order: Vec<usize> = (0..train.len()).collect();
        for _ in 0..cfg.source_epochs {
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.source_batch_size) {
                let batch: Vec<(&[f64], usize)> = chunk
                    .iter()
                    .map(|&i| (train.xs[i].as_slice(), train.ys[i]))
                    .collect();
                let (_, grads) = loss_and_grads(&model, &batch, AdaptVariant::FullFinetune)?;
                adam_step(&mut model, &mut state, &grads, lr, &cfg.adam);
            }
        }
        let dev_score = evaluate(&model, dev)?;
        let better = match &best {
            None => true,
            Some(b) => dev_score > b.dev_score,
        };
        if better {
            best = Some(SourceOutcome {
                model,
                dev_score,
                learning_rate: lr,
            });
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// Instantiates the model a variant actually trains: fresh cosine head for
/// the cosine variant, re-initialized FC head for the reset variant, a
/// plain copy otherwise.
pub fn prepare_for_variant(model: &ToyModel, variant: AdaptVariant, seed: u64) -> ToyModel {
    let mut prepared = model.clone();
    match variant {
        AdaptVariant::CosPooler => prepared.head = model.fresh_cos_head(seed),
        AdaptVariant::FcResetPooler => prepared.head = model.fresh_fc_head(seed),
        _ => {}
    }
    prepared
}

fn bucket_examples(bucket: &Bucket) -> Result<Vec<ClsExample>> {
    bucket
        .items
        .iter()
        .map(|item| match item {
            BucketItem::Cls(e) => Ok(e.clone()),
            BucketItem::Seq(_) => Err(AdaptError::NotClassification),
        })
        .collect()
}

/// Stage 2: adapts a source-trained (or fresh, for the no-source ablation)
/// model on one bucket with full-bucket batches, early stopping on dev,
/// and returns the best-dev checkpoint's scores plus the per-epoch trace.
#[allow(clippy::too_many_arguments)]
pub fn target_adapt(
    source_model: &ToyModel,
    bucket: &Bucket,
    dev: &FeaturizedSet,
    test: &FeaturizedSet,
    variant: AdaptVariant,
    labels: &LabelSet,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<RunResult> {
    cfg.validate()?;
    if bucket.items.is_empty() {
        return Err(AdaptError::EmptyBucket);
    }
    if dev.is_empty() {
        return Err(AdaptError::EmptyDev);
    }
    let examples = bucket_examples(bucket)?;
    let train = featurize_examples(&examples, labels, &source_model.config)?;
    let batch: Vec<(&[f64], usize)> = train
        .xs
        .iter()
        .map(Vec::as_slice)
        .zip(train.ys.iter().copied())
        .collect();

    let reinit_seed = mix64(cfg.seed, ADAPT_STREAM + u64::from(bucket.bucket_index));
    let mut model = prepare_for_variant(source_model, variant, reinit_seed);
    let mut state = AdamState::new(&model);
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut trace = Vec::new();
    let mut best_model = model.clone();

    for epoch in 1..=cfg.max_epochs {
        let (_, grads) = loss_and_grads(&model, &batch, variant)?;
        adam_step(&mut model, &mut state, &grads, lr, &cfg.adam);
        let dev_score = evaluate(&model, dev)?;
        trace.push(dev_score);
        let stop = stopper.observe(epoch, dev_score);
        if stopper.improved_at(epoch) {
            best_model = model.clone();
        }
        if stop {
            break;
        }
    }

    let test_score = evaluate(&best_model, test)?;
    Ok(RunResult {
        task: bucket.task.clone(),
        language: bucket.language.clone(),
        k: bucket.k,
        bucket_index: bucket.bucket_index,
        variant: variant.to_string(),
        learning_rate: lr,
        seed: cfg.seed,
        best_dev_score: stopper.best(),
        test_score,
        best_epoch: stopper.best_epoch() as u32,
        per_epoch_dev_trace: trace,
    })
}

/// Target adaptation with a per-run learning-rate search over the grid;
/// the run with the best dev score wins (first grid entry on ties).
#[allow(clippy::too_many_arguments)]
pub fn target_adapt_search(
    source_model: &ToyModel,
    bucket: &Bucket,
    dev: &FeaturizedSet,
    test: &FeaturizedSet,
    variant: AdaptVariant,
    labels: &LabelSet,
    cfg: &TrainConfig,
) -> Result<RunResult> {
    let mut best: Option<RunResult> = None;
    for lr in cfg.effective_lr_grid() {
        let run = target_adapt(source_model, bucket, dev, test, variant, labels, cfg, lr)?;
        let better = match &best {
            None => true,
            Some(b) => run.best_dev_score > b.best_dev_score,
        };
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("grid is non-empty"))
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config_hash: String,
    model: ToyModel,
}

/// Hash binding a checkpoint to the model and training configs that
/// produced it.
pub fn config_hash(model_cfg: &ModelConfig, train_cfg: &TrainConfig) -> String {
    let payload =
        serde_json::to_string(&(model_cfg, train_cfg)).expect("configs serialize");
    let digest = Sha256::digest(payload.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_checkpoint<W: Write>(writer: W, model: &ToyModel, config_hash: &str) -> Result<()> {
    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        config_hash: config_hash.to_string(),
        model: model.clone(),
    };
    serde_json::to_writer(writer, &checkpoint)?;
    Ok(())
}

/// Loads a checkpoint, verifying the version and (when given) the config
/// hash.
pub fn load_checkpoint<R: Read>(reader: R, expected_hash: Option<&str>) -> Result<ToyModel> {
    let checkpoint: Checkpoint = serde_json::from_reader(reader)?;
    if checkpoint.version != CHECKPOINT_VERSION {
        return Err(AdaptError::CheckpointVersion {
            found: checkpoint.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if let Some(expected) = expected_hash {
        if checkpoint.config_hash != expected {
            return Err(AdaptError::CheckpointHash {
                found: checkpoint.config_hash,
                expected: expected.to_string(),
            });
        }
    }
    Ok(checkpoint.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelKind;
    use crate::sampler::BucketKind;

    fn labels2() -> LabelSet {
        LabelSet::new(vec!["neg".into(), "pos".into()], LabelKind::Classification).unwrap()
    }

    fn toy_set(model: &ToyModel, texts: &[(&str, usize)]) -> FeaturizedSet {
        FeaturizedSet {
            xs: texts.iter().map(|(t, _)| model.featurize(t)).collect(),
            ys: texts.iter().map(|(_, y)| *y).collect(),
        }
    }

    #[test]
    fn uniform_logits_give_log_c_loss() {
        let mut model = ToyModel::init(ModelConfig::new(6, 4, 3), 1);
        if let Head::Fc { weight, bias } = &mut model.head {
            weight.iter_mut().for_each(|w| *w = 0.0);
            bias.iter_mut().for_each(|b| *b = 0.0);
        }
        let x = model.featurize("hello world");
        let batch: Vec<(&[f64], usize)> = vec![(x.as_slice(), 1)];
        let (loss, _) = loss_and_grads(&model, &batch, AdaptVariant::FullFinetune).unwrap();
        assert!((loss - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn frozen_tensors_have_exactly_zero_gradients() {
        let model = ToyModel::init(ModelConfig::new(6, 4, 3), 2);
        let x = model.featurize("a b c");
        let batch: Vec<(&[f64], usize)> = vec![(x.as_slice(), 0)];
        let (_, grads) = loss_and_grads(&model, &batch, AdaptVariant::FcOnly).unwrap();
        assert!(grads.enc_w.iter().all(|g| *g == 0.0));
        assert!(grads.enc_b.iter().all(|g| *g == 0.0));
        assert!(grads.pool_w.iter().all(|g| *g == 0.0));
        assert!(grads.pool_b.iter().all(|g| *g == 0.0));
        assert!(grads.head_w.iter().any(|g| *g != 0.0));
    }

    /// Central finite differences across every trainable scalar. The full
    /// randomized sweep lives in the acceptance suite; this pins one model
    /// per variant.
    fn finite_difference_check(variant: AdaptVariant, seed: u64) {
        let base = ToyModel::init(ModelConfig::new(5, 4, 3), seed);
        let model = prepare_for_variant(&base, variant, mix64(seed, 7));
        let mut rng = rng_from(mix64(seed, 99));
        use rand::Rng;
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let batch: Vec<(&[f64], usize)> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| (x.as_slice(), i % 3))
            .collect();
        let (_, analytic) = loss_and_grads(&model, &batch, variant).unwrap();

        let h = 1e-5;
        let loss_of = |m: &ToyModel| loss_and_grads(m, &batch, variant).unwrap().0;
        let check = |name: &str, select: &dyn Fn(&mut ToyModel) -> &mut Vec<f64>,
                     grad: &[f64]| {
            for idx in 0..grad.len() {
                let mut plus = model.clone();
                select(&mut plus)[idx] += h;
                let mut minus = model.clone();
                select(&mut minus)[idx] -= h;
                let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                let denom = analytic_denom(grad[idx], numeric);
                assert!(
                    (grad[idx] - numeric).abs() <= 1e-4 * denom + 1e-8,
                    "{variant:?} {name}[{idx}]: analytic {} vs numeric {numeric}",
                    grad[idx]
                );
            }
        };
        if variant.trains_encoder() {
            check("enc_w", &|m| &mut m.enc_w, &analytic.enc_w);
            check("enc_b", &|m| &mut m.enc_b, &analytic.enc_b);
        }
        if variant.trains_pooler() {
            check("pool_w", &|m| &mut m.pool_w, &analytic.pool_w);
            check("pool_b", &|m| &mut m.pool_b, &analytic.pool_b);
        }
        check(
            "head_w",
            &|m| match &mut m.head {
                Head::Fc { weight, .. } | Head::Cos { weight, .. } => weight,
            },
            &analytic.head_w,
        );
        if !model.head.is_cos() {
            check(
                "head_b",
                &|m| match &mut m.head {
                    Head::Fc { bias, .. } => bias,
                    Head::Cos { .. } => unreachable!(),
                },
                &analytic.head_b,
            );
        }
    }

    fn analytic_denom(a: f64, n: f64) -> f64 {
        a.abs().max(n.abs()).max(1.0)
    }

    #[test]
    fn gradients_match_finite_differences_for_all_variants() {
        for (i, variant) in AdaptVariant::ALL.into_iter().enumerate() {
            finite_difference_check(variant, 100 + i as u64);
        }
    }

    #[test]
    fn early_stopper_contract_walkthrough() {
        // dev trace: .6, then .7, then ten non-improving .7 epochs
        let mut stopper = EarlyStopper::new(10);
        assert!(!stopper.observe(1, 0.6));
        assert!(!stopper.observe(2, 0.7));
        for epoch in 3..=11 {
            assert!(!stopper.observe(epoch, 0.7), "stopped early at {epoch}");
        }
        assert!(stopper.observe(12, 0.7));
        assert_eq!(stopper.best_epoch(), 2);
        assert_eq!(stopper.best(), 0.7);
    }

    fn separable_two_class(model: &ToyModel) -> (FeaturizedSet, FeaturizedSet) {
        let mut train = Vec::new();
        let mut dev = Vec::new();
        for i in 0..120 {
            let (text, y) = if i % 2 == 0 {
                (format!("alpha strong clear signal{}", i % 7), 0)
            } else {
                (format!("beta inverse faint marker{}", i % 7), 1)
            };
            if i < 100 {
                train.push((text, y));
            } else {
                dev.push((text, y));
            }
        }
        let to_set = |pairs: &[(String, usize)]| FeaturizedSet {
            xs: pairs.iter().map(|(t, _)| model.featurize(t)).collect(),
            ys: pairs.iter().map(|(_, y)| *y).collect(),
        };
        (to_set(&train), to_set(&dev))
    }

    #[test]
    fn source_training_solves_a_separable_task() {
        let model = ToyModel::init(ModelConfig::new(64, 12, 2), 3);
        let (train, dev) = separable_two_class(&model);
        let cfg = TrainConfig::default().with_seed(5);
        let outcome = source_train(&model, &train, &dev, &cfg).unwrap();
        assert!(
            outcome.dev_score >= 0.95,
            "dev accuracy {} below 0.95",
            outcome.dev_score
        );
        assert!(cfg
            .effective_lr_grid()
            .contains(&outcome.learning_rate));
        // deterministic given seed
        let again = source_train(&model, &train, &dev, &cfg).unwrap();
        assert_eq!(outcome.model, again.model);
        assert_eq!(outcome.dev_score, again.dev_score);
    }

    fn demo_bucket(model: &ToyModel, labels: &LabelSet) -> Bucket {
        let items = vec![
            BucketItem::Cls(
                ClsExample::new("alpha strong clear".into(), None, "neg".into()).unwrap(),
            ),
            BucketItem::Cls(
                ClsExample::new("beta inverse faint".into(), None, "pos".into()).unwrap(),
            ),
        ];
        let _ = (model, labels);
        Bucket {
            task: "demo".into(),
            language: "xx".into(),
            k: 1,
            bucket_index: 0,
            seed: 7,
            kind: BucketKind::Classification,
            items,
            source_indices: vec![0, 1],
        }
    }

    #[test]
    fn target_adapt_is_bit_deterministic() {
        let labels = labels2();
        let model = ToyModel::init(ModelConfig::new(32, 8, 2), 9);
        let dev = toy_set(&model, &[("alpha strong", 0), ("beta faint", 1), ("alpha clear", 0)]);
        let test = toy_set(&model, &[("beta inverse", 1), ("alpha signal0", 0)]);
        let bucket = demo_bucket(&model, &labels);
        let cfg = TrainConfig {
            max_epochs: 15,
            ..TrainConfig::default().with_seed(13)
        };
        let a = target_adapt(&model, &bucket, &dev, &test, AdaptVariant::FullFinetune, &labels, &cfg, 0.003).unwrap();
        let b = target_adapt(&model, &bucket, &dev, &test, AdaptVariant::FullFinetune, &labels, &cfg, 0.003).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_eq!(a.variant, "full");
    }

    #[test]
    fn best_dev_never_decreases_with_more_epochs_when_patience_disabled() {
        let labels = labels2();
        let model = ToyModel::init(ModelConfig::new(32, 8, 2), 21);
        let dev = toy_set(
            &model,
            &[("alpha one", 0), ("alpha two", 0), ("beta one", 1), ("beta two", 1)],
        );
        let test = dev.clone();
        let bucket = demo_bucket(&model, &labels);
        let mut last_best = 0.0;
        for max_epochs in [3usize, 8, 20, 40] {
            let cfg = TrainConfig {
                max_epochs,
                patience: usize::MAX,
                ..TrainConfig::default().with_seed(2)
            };
            let run = target_adapt(
                &model,
                &bucket,
                &dev,
                &test,
                AdaptVariant::FullFinetune,
                &labels,
                &cfg,
                0.002,
            )
            .unwrap();
            assert!(
                run.best_dev_score >= last_best,
                "best dev regressed: {} < {last_best}",
                run.best_dev_score
            );
            last_best = run.best_dev_score;
        }
    }

    #[test]
    fn variant_masks_touch_only_their_parameters() {
        let labels = labels2();
        let base = ToyModel::init(ModelConfig::new(32, 8, 2), 31);
        let bucket = demo_bucket(&base, &labels);
        let examples = bucket_examples(&bucket).unwrap();
        let train = featurize_examples(&examples, &labels, &base.config).unwrap();
        let batch: Vec<(&[f64], usize)> = train
            .xs
            .iter()
            .map(Vec::as_slice)
            .zip(train.ys.iter().copied())
            .collect();

        for variant in AdaptVariant::ALL {
            let mut model = prepare_for_variant(&base, variant, 77);
            let start = model.clone();
            let mut state = AdamState::new(&model);
            for _ in 0..4 {
                let (_, grads) = loss_and_grads(&model, &batch, variant).unwrap();
                adam_step(&mut model, &mut state, &grads, 0.01, &AdamParams::default());
            }
            let enc_changed = model.enc_w != start.enc_w || model.enc_b != start.enc_b;
            let pool_changed = model.pool_w != start.pool_w || model.pool_b != start.pool_b;
            let head_changed = model.head != start.head;
            assert_eq!(enc_changed, variant.trains_encoder(), "{variant:?} encoder");
            assert_eq!(pool_changed, variant.trains_pooler(), "{variant:?} pooler");
            assert!(head_changed, "{variant:?} head should train");
        }
    }

    #[test]
    fn reset_head_starts_near_chance_on_balanced_dev() {
        // Mean dev accuracy over R independent re-initializations must sit
        // within 3 sigma of 1/c; a [0,1] variable with mean p has variance
        // at most p(1-p), so sigma <= sqrt(p(1-p)/R).
        let classes = 4;
        let model = ToyModel::init(ModelConfig::new(48, 10, classes), 17);
        let mut texts = Vec::new();
        for c in 0..classes {
            for i in 0..10 {
                texts.push((format!("class{c} word{i} filler"), c));
            }
        }
        let dev = toy_set(&model, &texts.iter().map(|(t, y)| (t.as_str(), *y)).collect::<Vec<_>>());
        let runs = 200;
        let mut sum = 0.0;
        for r in 0..runs {
            let prepared = prepare_for_variant(&model, AdaptVariant::FcResetPooler, 1000 + r);
            sum += evaluate(&prepared, &dev).unwrap();
        }
        let mean = sum / runs as f64;
        let p = 1.0 / classes as f64;
        let sigma = (p * (1.0 - p) / runs as f64).sqrt();
        assert!(
            (mean - p).abs() <= 3.0 * sigma,
            "mean accuracy {mean} outside 3 sigma of {p} (sigma {sigma})"
        );
    }

    #[test]
    fn lr_search_picks_the_best_dev_run() {
        let labels = labels2();
        let model = ToyModel::init(ModelConfig::new(32, 8, 2), 41);
        let dev = toy_set(&model, &[("alpha a", 0), ("beta b", 1), ("alpha c", 0), ("beta d", 1)]);
        let test = dev.clone();
        let bucket = demo_bucket(&model, &labels);
        let cfg = TrainConfig {
            max_epochs: 10,
            ..TrainConfig::default().with_seed(3)
        };
        let searched =
            target_adapt_search(&model, &bucket, &dev, &test, AdaptVariant::FcPooler, &labels, &cfg)
                .unwrap();
        for lr in cfg.effective_lr_grid() {
            let fixed = target_adapt(
                &model,
                &bucket,
                &dev,
                &test,
                AdaptVariant::FcPooler,
                &labels,
                &cfg,
                lr,
            )
            .unwrap();
            assert!(searched.best_dev_score >= fixed.best_dev_score);
        }
    }

    #[test]
    fn checkpoints_round_trip_and_verify_hashes() {
        let model = ToyModel::init(ModelConfig::new(8, 4, 2), 51);
        let cfg = TrainConfig::default();
        let hash = config_hash(&model.config, &cfg);
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &model, &hash).unwrap();
        let loaded = load_checkpoint(&buf[..], Some(&hash)).unwrap();
        assert_eq!(loaded, model);
        assert!(matches!(
            load_checkpoint(&buf[..], Some("deadbeef")),
            Err(AdaptError::CheckpointHash { .. })
        ));
        // hash differs when the config differs
        let other = TrainConfig {
            max_epochs: 5,
            ..TrainConfig::default()
        };
        assert_ne!(hash, config_hash(&model.config, &other));
    }
}
