//! Experiment configuration: a TOML file of defaults, overridden by
//! command-line flags, then validated against the manifest.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use xlt_core::adapt::{AdamParams, ModelConfig, TrainConfig};
use xlt_core::corpus::{LabelKind, Manifest};

use crate::GlobalArgs;

pub const CLS_K_VALUES: [u32; 4] = [1, 2, 4, 8];
pub const SEQ_K_VALUES: [u32; 3] = [1, 2, 4];

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifest: Option<PathBuf>,
    pub task: Option<String>,
    pub languages: Option<Vec<String>>,
    pub source_language: Option<String>,
    pub k: Option<Vec<u32>>,
    pub count: Option<u32>,
    pub seed: Option<u64>,
    pub variant: Option<String>,
    pub out: Option<PathBuf>,
    /// Case-fold texts before vocabulary computations (off by default).
    pub lowercase: Option<bool>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub alpha: f64,
    pub featurizer_seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            feature_dim: 256,
            hidden_dim: 16,
            alpha: 10.0,
            featurizer_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub max_epochs: usize,
    pub patience: usize,
    pub source_epochs: usize,
    pub source_batch_size: usize,
    pub lr_grid: Vec<f64>,
    pub lr_scale: f64,
    /// Fixed learning rate for target adaptation; absent means "use the
    /// rate source training selected".
    pub lr: Option<f64>,
    /// Search the grid per run instead of using a fixed rate.
    pub lr_search: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            max_epochs: d.max_epochs,
            patience: d.patience,
            source_epochs: d.source_epochs,
            source_batch_size: d.source_batch_size,
            lr_grid: d.lr_grid,
            lr_scale: d.lr_scale,
            lr: None,
            lr_search: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Fully merged and validated experiment settings.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
    pub task: String,
    pub languages: Vec<String>,
    pub source_language: String,
    pub k_values: Vec<u32>,
    pub count: u32,
    pub seed: u64,
    pub variant: String,
    pub out: PathBuf,
    pub lowercase: bool,
    pub jobs: usize,
    pub model: ModelSection,
    pub train: TrainSection,
}

impl Resolved {
    pub fn model_config(&self, classes: usize) -> ModelConfig {
        ModelConfig {
            feature_dim: self.model.feature_dim,
            hidden_dim: self.model.hidden_dim,
            classes,
            alpha: self.model.alpha,
            featurizer_seed: self.model.featurizer_seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            source_epochs: self.train.source_epochs,
            source_batch_size: self.train.source_batch_size,
            lr_grid: self.train.lr_grid.clone(),
            lr_scale: self.train.lr_scale,
            adam: AdamParams::default(),
            seed: self.seed,
        }
    }
}

/// Valid shot counts for a task kind.
pub fn valid_k(kind: LabelKind, k: u32) -> bool {
    if kind.is_sequence() {
        SEQ_K_VALUES.contains(&k)
    } else {
        CLS_K_VALUES.contains(&k)
    }
}

pub struct Overrides<'a> {
    pub task: Option<&'a str>,
    pub languages: Option<&'a [String]>,
    pub k: Option<&'a [u32]>,
    pub count: Option<u32>,
    pub variant: Option<&'a str>,
}

impl Default for Overrides<'_> {
    fn default() -> Self {
        Self {
            task: None,
            languages: None,
            k: None,
            count: None,
            variant: None,
        }
    }
}

/// Merges config file, global flags, and per-command overrides, loads the
/// manifest, and validates the cell grid.
pub fn resolve(global: &GlobalArgs, overrides: &Overrides) -> Result<Resolved> {
    let file = match &global.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };

    let manifest_path = global
        .manifest
        .clone()
        .or_else(|| {
            file.manifest.as_ref().map(|m| {
                // manifest paths in a config file are relative to it
                match &global.config {
                    Some(cfg) => cfg.parent().unwrap_or(Path::new(".")).join(m),
                    None => m.clone(),
                }
            })
        })
        .context("no manifest given (set `manifest` in the config or pass --manifest)")?;
    if !manifest_path.exists() {
        bail!("manifest {} does not exist", manifest_path.display());
    }
    let manifest = Manifest::load(&manifest_path)?;

    let task = overrides
        .task
        .map(str::to_string)
        .or(file.task.clone())
        .context("no task given (set `task` in the config or pass --task)")?;
    let spec = manifest.task(&task)?;

    let source_language = file.source_language.clone().unwrap_or_else(|| "en".into());
    let languages: Vec<String> = match (overrides.languages, &file.languages) {
        (Some(cli), _) if !cli.is_empty() => cli.to_vec(),
        (_, Some(cfg)) if !cfg.is_empty() => cfg.clone(),
        _ => manifest
            .languages(&task)?
            .into_iter()
            .filter(|l| *l != source_language)
            .collect(),
    };
    if languages.is_empty() {
        bail!("task {task:?} has no target languages");
    }
    for lang in &languages {
        if !spec.files.contains_key(lang) {
            bail!("task {task:?} has no files for language {lang:?}");
        }
    }

    let k_values: Vec<u32> = overrides
        .k
        .map(<[u32]>::to_vec)
        .or(file.k.clone())
        .unwrap_or_else(|| vec![1]);
    for &k in &k_values {
        if !valid_k(spec.kind, k) {
            let allowed: &[u32] = if spec.kind.is_sequence() {
                &SEQ_K_VALUES
            } else {
                &CLS_K_VALUES
            };
            bail!(
                "K={k} is invalid for {} task {task:?} (allowed: {allowed:?})",
                spec.kind
            );
        }
    }

    Ok(Resolved {
        manifest_path,
        manifest,
        task,
        languages,
        source_language,
        k_values,
        count: overrides.count.or(file.count).unwrap_or(40),
        seed: global.seed.or(file.seed).unwrap_or(0),
        variant: overrides
            .variant
            .map(str::to_string)
            .or(file.variant.clone())
            .unwrap_or_else(|| "full".into()),
        out: global
            .out
            .clone()
            .or(file.out.clone())
            .unwrap_or_else(|| PathBuf::from("out")),
        lowercase: file.lowercase.unwrap_or(false),
        jobs: global.jobs.unwrap_or(1).max(1),
        model: file.model,
        train: file.train,
    })
}
