//! Synthetic classification tasks for tests and end-to-end demos.
//!
//! Each class owns a pool of keyword tokens; examples mix a variable
//! number of own-class keywords with shared noise tokens, so example
//! difficulty is deliberately heterogeneous — some examples are nearly
//! pure signal, some nearly pure noise. A target language shares a
//! configurable fraction of each class's keywords with the source
//! language (stand-ins for loanwords and cognates) and replaces the rest
//! with language-specific tokens, which is what makes zero-shot transfer
//! work partially and bucket adaptation pay off.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClsExample, Dataset, Examples, LabelKind, LabelSet, Split};
use crate::seed::{hash_str, mix64, rng_from, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    /// Keyword pool size per class.
    pub keywords_per_class: usize,
    /// Inclusive range of own-class keywords per example; the low end
    /// controls how uninformative the hardest examples are.
    pub keywords_per_example: (usize, usize),
    /// Size of the noise vocabulary shared across classes and languages.
    pub noise_vocab: usize,
    /// Inclusive range of noise tokens per example.
    pub noise_per_example: (usize, usize),
    /// Fraction of each class's keywords a target language shares with
    /// the source language.
    pub shared_keyword_fraction: f64,
    pub train_per_class: usize,
    pub dev_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            keywords_per_class: 20,
            keywords_per_example: (1, 4),
            noise_vocab: 50,
            noise_per_example: (3, 8),
            shared_keyword_fraction: 0.3,
            train_per_class: 160,
            dev_per_class: 40,
            test_per_class: 40,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn label_set(&self) -> LabelSet {
        LabelSet::new(
            (0..self.classes).map(|c| c.to_string()).collect(),
            LabelKind::Classification,
        )
        .expect("class labels are unique and non-empty")
    }

    fn shared_count(&self) -> usize {
        ((self.keywords_per_class as f64) * self.shared_keyword_fraction).floor() as usize
    }

    /// Keyword token `j` of class `c` in the given language. The first
    /// `shared_count` keywords are identical across languages.
    fn keyword(&self, language: &str, class: usize, j: usize) -> String {
        if language == SOURCE_LANGUAGE || j < self.shared_count() {
            format!("kw_c{class}_{j}")
        } else {
            format!("kw_{language}_c{class}_{j}")
        }
    }
}

pub const SOURCE_LANGUAGE: &str = "en";

fn generate_example(
    cfg: &SynthConfig,
    language: &str,
    class: usize,
    rng: &mut SeededRng,
) -> ClsExample {
    let (kw_lo, kw_hi) = cfg.keywords_per_example;
    let (nz_lo, nz_hi) = cfg.noise_per_example;
    let n_keywords = rng.gen_range(kw_lo..=kw_hi);
    let n_noise = rng.gen_range(nz_lo..=nz_hi);
    let mut tokens: Vec<String> = (0..n_keywords)
        .map(|_| cfg.keyword(language, class, rng.gen_range(0..cfg.keywords_per_class)))
        .collect();
    tokens.extend((0..n_noise).map(|_| format!("nz{}", rng.gen_range(0..cfg.noise_vocab))));
    use rand::seq::SliceRandom;
    tokens.shuffle(rng);
    if tokens.is_empty() {
        tokens.push(format!("nz{}", rng.gen_range(0..cfg.noise_vocab)));
    }
    ClsExample {
        text_a: tokens.join(" "),
        text_b: None,
        label: class.to_string(),
    }
}

fn generate_split(
    cfg: &SynthConfig,
    language: &str,
    split: Split,
    per_class: usize,
) -> Vec<ClsExample> {
    let stream = mix64(
        cfg.seed,
        hash_str(&format!("{language}/{split}")),
    );
    let mut rng = rng_from(stream);
    let mut examples = Vec::with_capacity(per_class * cfg.classes);
    // round-robin over classes so any prefix is roughly balanced
    for i in 0..per_class {
        for class in 0..cfg.classes {
            let _ = i;
            examples.push(generate_example(cfg, language, class, &mut rng));
        }
    }
    examples
}

/// Generates a full train/dev/test dataset for one language of the task.
/// Use [`SOURCE_LANGUAGE`] for the source side.
pub fn generate_language(cfg: &SynthConfig, task: &str, language: &str) -> Dataset {
    let mut splits = BTreeMap::new();
    splits.insert(
        Split::Train,
        Examples::Cls(generate_split(cfg, language, Split::Train, cfg.train_per_class)),
    );
    splits.insert(
        Split::Dev,
        Examples::Cls(generate_split(cfg, language, Split::Dev, cfg.dev_per_class)),
    );
    splits.insert(
        Split::Test,
        Examples::Cls(generate_split(cfg, language, Split::Test, cfg.test_per_class)),
    );
    Dataset::new(
        task.to_string(),
        language.to_string(),
        splits,
        cfg.label_set(),
    )
    .expect("generated labels are always in the label set")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig::default();
        let a = generate_language(&cfg, "demo", "xx");
        let b = generate_language(&cfg, "demo", "xx");
        assert_eq!(
            a.split(Split::Train).unwrap().as_cls().unwrap(),
            b.split(Split::Train).unwrap().as_cls().unwrap()
        );
    }

    #[test]
    fn splits_are_balanced_and_sized() {
        let cfg = SynthConfig {
            train_per_class: 12,
            dev_per_class: 5,
            test_per_class: 7,
            ..SynthConfig::default()
        };
        let data = generate_language(&cfg, "demo", SOURCE_LANGUAGE);
        let train = data.split(Split::Train).unwrap().as_cls().unwrap();
        assert_eq!(train.len(), 12 * cfg.classes);
        for class in 0..cfg.classes {
            let count = train
                .iter()
                .filter(|e| e.label == class.to_string())
                .count();
            assert_eq!(count, 12);
        }
        assert_eq!(data.split(Split::Dev).unwrap().len(), 5 * cfg.classes);
        assert_eq!(data.split(Split::Test).unwrap().len(), 7 * cfg.classes);
    }

    #[test]
    fn target_language_shares_only_the_configured_keywords() {
        let cfg = SynthConfig {
            shared_keyword_fraction: 0.25,
            keywords_per_class: 8,
            ..SynthConfig::default()
        };
        // shared prefix: floor(8 * 0.25) = 2 keywords per class
        assert_eq!(cfg.keyword("xx", 0, 0), cfg.keyword(SOURCE_LANGUAGE, 0, 0));
        assert_eq!(cfg.keyword("xx", 0, 1), cfg.keyword(SOURCE_LANGUAGE, 0, 1));
        assert_ne!(cfg.keyword("xx", 0, 2), cfg.keyword(SOURCE_LANGUAGE, 0, 2));
        assert_ne!(cfg.keyword("xx", 3, 7), cfg.keyword("yy", 3, 7));
    }

    #[test]
    fn languages_differ_but_share_noise() {
        let cfg = SynthConfig::default();
        let en = generate_language(&cfg, "demo", SOURCE_LANGUAGE);
        let xx = generate_language(&cfg, "demo", "xx");
        let en_vocab = en.split(Split::Train).unwrap().vocabulary();
        let xx_vocab = xx.split(Split::Train).unwrap().vocabulary();
        assert!(en_vocab.intersection(&xx_vocab).count() > 0);
        assert!(xx_vocab.iter().any(|w| w.starts_with("kw_xx_")));
        assert!(en_vocab.iter().all(|w| !w.starts_with("kw_xx_")));
    }
}
