//! The toy model: hashed bag-of-tokens featurizer, tanh encoder, tanh
//! pooler, and a fully-connected or cosine classifier head.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::rng_from;

use super::{AdaptError, Result};

/// Norm floor under the cosine head; anything at or below it is treated
/// as a zero vector and reported instead of silently propagating NaNs.
pub(crate) const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Featurizer output dimension (d).
    pub feature_dim: usize,
    /// Encoder/pooler width (h).
    pub hidden_dim: usize,
    /// Number of classes (c).
    pub classes: usize,
    /// Cosine-head logit scale.
    pub alpha: f64,
    /// Seed of the fixed (non-trainable) featurizer hash.
    pub featurizer_seed: u64,
}

impl ModelConfig {
    pub fn new(feature_dim: usize, hidden_dim: usize, classes: usize) -> Self {
        Self {
            feature_dim,
            hidden_dim,
            classes,
            alpha: 10.0,
            featurizer_seed: 0,
        }
    }
}

fn hash_token(token: &str, seed: u64) -> u64 {
    // FNV-1a with the seed folded in, then a SplitMix finalizer so the
    // low bits used for the modulo are well mixed.
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for byte in token.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^ (h >> 31)
}

/// Hashed bag-of-tokens: each whitespace token lands in one of `d` slots,
/// counts accumulate, the result is L2-normalized. Empty text maps to the
/// zero vector. Deterministic in (text, d, seed).
pub fn featurize(text: &str, d: usize, seed: u64) -> Vec<f64> {
    let mut x = vec![0.0; d];
    for token in text.split_whitespace() {
        x[(hash_token(token, seed) % d as u64) as usize] += 1.0;
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut x {
            *v /= norm;
        }
    }
    x
}

/// Classifier head. The cosine head has no bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Head {
    Fc {
        /// c × h, row-major; row i scores class i.
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    Cos {
        /// c × h, row-major; row i is the class-i prototype direction.
        weight: Vec<f64>,
        alpha: f64,
    },
}

impl Head {
    pub fn is_cos(&self) -> bool {
        matches!(self, Head::Cos { .. })
    }
}

/// Target-adapting regime: which parameters train and which head is used.
/// Every variant except full finetuning freezes the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AdaptVariant {
    /// All parameters train.
    FullFinetune,
    /// Only the FC classifier layer trains.
    FcOnly,
    /// FC classifier and pooler train.
    FcPooler,
    /// Fresh cosine head plus pooler train.
    CosPooler,
    /// FC head is randomly re-initialized, then head plus pooler train.
    FcResetPooler,
}

impl AdaptVariant {
    pub const ALL: [AdaptVariant; 5] = [
        AdaptVariant::FullFinetune,
        AdaptVariant::FcOnly,
        AdaptVariant::FcPooler,
        AdaptVariant::CosPooler,
        AdaptVariant::FcResetPooler,
    ];

    pub fn trains_encoder(self) -> bool {
        matches!(self, AdaptVariant::FullFinetune)
    }

    pub fn trains_pooler(self) -> bool {
        !matches!(self, AdaptVariant::FcOnly)
    }
}

impl fmt::Display for AdaptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AdaptVariant::FullFinetune => "full",
            AdaptVariant::FcOnly => "fc-only",
            AdaptVariant::FcPooler => "fc-pooler",
            AdaptVariant::CosPooler => "cos-pooler",
            AdaptVariant::FcResetPooler => "fc-reset-pooler",
        };
        write!(f, "{name}")
    }
}

impl FromStr for AdaptVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => Ok(AdaptVariant::FullFinetune),
            "fc-only" => Ok(AdaptVariant::FcOnly),
            "fc-pooler" => Ok(AdaptVariant::FcPooler),
            "cos-pooler" => Ok(AdaptVariant::CosPooler),
            "fc-reset-pooler" => Ok(AdaptVariant::FcResetPooler),
            other => Err(format!(
                "unknown variant {other:?} (expected full, fc-only, fc-pooler, cos-pooler, fc-reset-pooler)"
            )),
        }
    }
}

/// Trainable parameters plus the fixed featurizer config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub config: ModelConfig,
    /// h × d, row-major.
    pub enc_w: Vec<f64>,
    pub enc_b: Vec<f64>,
    /// h × h, row-major.
    pub pool_w: Vec<f64>,
    pub pool_b: Vec<f64>,
    pub head: Head,
}

fn uniform_init(rng: &mut crate::seed::SeededRng, len: usize, fan_in: usize) -> Vec<f64> {
    let scale = 1.0 / (fan_in as f64).sqrt();
    (0..len).map(|_| rng.gen_range(-scale..scale)).collect()
}

impl ToyModel {
    /// Symmetric-uniform initialization (scale 1/√fan-in) with an FC head.
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let (d, h, c) = (config.feature_dim, config.hidden_dim, config.classes);
        let mut rng = rng_from(seed);
        ToyModel {
            config,
            enc_w: uniform_init(&mut rng, h * d, d),
            enc_b: uniform_init(&mut rng, h, d),
            pool_w: uniform_init(&mut rng, h * h, h),
            pool_b: uniform_init(&mut rng, h, h),
            head: Head::Fc {
                weight: uniform_init(&mut rng, c * h, h),
                bias: uniform_init(&mut rng, c, h),
            },
        }
    }

    pub(crate) fn fresh_fc_head(&self, seed: u64) -> Head {
        let (h, c) = (self.config.hidden_dim, self.config.classes);
        let mut rng = rng_from(seed);
        Head::Fc {
            weight: uniform_init(&mut rng, c * h, h),
            bias: uniform_init(&mut rng, c, h),
        }
    }

    pub(crate) fn fresh_cos_head(&self, seed: u64) -> Head {
        let (h, c) = (self.config.hidden_dim, self.config.classes);
        let mut rng = rng_from(seed);
        Head::Cos {
            weight: uniform_init(&mut rng, c * h, h),
            alpha: self.config.alpha,
        }
    }

    pub fn featurize(&self, text: &str) -> Vec<f64> {
        featurize(text, self.config.feature_dim, self.config.featurizer_seed)
    }
}

/// Activations kept for backprop.
#[derive(Debug, Clone)]
pub struct Forward {
    pub encoded: Vec<f64>,
    pub pooled: Vec<f64>,
    pub logits: Vec<f64>,
}

fn affine_tanh(w: &[f64], b: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    (0..rows)
        .map(|i| {
            let z = b[i]
                + w[i * cols..(i + 1) * cols]
                    .iter()
                    .zip(x)
                    .map(|(wij, xj)| wij * xj)
                    .sum::<f64>();
            z.tanh()
        })
        .collect()
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scaled cosine logits: `alpha * cos(pooled, w_i)` per class row of
/// `weight` (c × h). Errors if the pooled vector or any class row has
/// (near-)zero norm.
pub fn cos_logits(pooled: &[f64], weight: &[f64], alpha: f64) -> Result<Vec<f64>> {
    let h = pooled.len();
    let c = weight.len() / h;
    let p_norm = l2_norm(pooled);
    if p_norm <= NORM_EPS {
        return Err(AdaptError::ZeroNorm { what: "pooled representation" });
    }
    let mut logits = Vec::with_capacity(c);
    for i in 0..c {
        let w = &weight[i * h..(i + 1) * h];
        let w_norm = l2_norm(w);
        if w_norm <= NORM_EPS {
            return Err(AdaptError::ZeroNorm { what: "class weight row" });
        }
        let dot: f64 = w.iter().zip(pooled).map(|(a, b)| a * b).sum();
        logits.push(alpha * dot / (p_norm * w_norm));
    }
    Ok(logits)
}

/// Runs the model on one feature vector.
pub fn forward(model: &ToyModel, x: &[f64]) -> Result<Forward> {
    let (d, h, c) = (
        model.config.feature_dim,
        model.config.hidden_dim,
        model.config.classes,
    );
    debug_assert_eq!(x.len(), d);
    let encoded = affine_tanh(&model.enc_w, &model.enc_b, x, h, d);
    let pooled = affine_tanh(&model.pool_w, &model.pool_b, &encoded, h, h);
    let logits = match &model.head {
        Head::Fc { weight, bias } => (0..c)
            .map(|i| {
                bias[i]
                    + weight[i * h..(i + 1) * h]
                        .iter()
                        .zip(&pooled)
                        .map(|(w, p)| w * p)
                        .sum::<f64>()
            })
            .collect(),
        Head::Cos { weight, alpha } => cos_logits(&pooled, weight, *alpha)?,
    };
    Ok(Forward {
        encoded,
        pooled,
        logits,
    })
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
