//! Dataset parsing, validation, and indexing.
//!
//! Two on-disk formats are supported:
//!
//! * CoNLL-style sequence labeling: UTF-8, one `token<TAB>label` per line,
//!   blank line between sentences, optional `#`-prefixed metadata lines
//!   before the first token line of a sentence.
//! * Classification TSV: UTF-8, three tab-separated columns
//!   `text_a<TAB>text_b<TAB>label`, no header; `text_b` may be empty.
//!
//! A [`Manifest`] maps task/language/split to files and declares each
//! task's label set, so the rest of the harness never touches raw paths.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: expected {expected} tab-separated fields, found {found}")]
    FieldCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("input contains no sentences")]
    EmptyInput,
    #[error("sentence has {tokens} tokens but {labels} labels")]
    LengthMismatch { tokens: usize, labels: usize },
    #[error("sentence must contain at least one token")]
    EmptySentence,
    #[error("token at position {position} is empty")]
    EmptyToken { position: usize },
    #[error("text_a must be non-empty")]
    EmptyTextA,
    #[error("label set must be non-empty")]
    EmptyLabelSet,
    #[error("duplicate label {0:?} in label set")]
    DuplicateLabel(String),
    #[error("label {0:?} is not a valid BIO tag (expected \"O\", \"B-X\", or \"I-X\")")]
    InvalidBioLabel(String),
    #[error("unknown label {label:?} (task declares {known:?})")]
    UnknownLabel { label: String, known: Vec<String> },
    #[error("split {split} holds {found} examples but task kind {kind} expects {expected}")]
    SplitKindMismatch {
        split: Split,
        kind: LabelKind,
        expected: &'static str,
        found: &'static str,
    },
    #[error("unknown task {0:?} in manifest")]
    UnknownTask(String),
    #[error("task {task:?} has no files for language {language:?}")]
    UnknownLanguage { task: String, language: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse manifest {path}: {source}")]
    ManifestSyntax {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// What the labels of a task mean; decides sampling and scoring behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelKind {
    /// One label per example (accuracy).
    Classification,
    /// One label per token, no chunk structure (token-level F1).
    TokenTagging,
    /// One BIO label per token (chunk-level entity F1).
    BioTagging,
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelKind::Classification => write!(f, "classification"),
            LabelKind::TokenTagging => write!(f, "token-tagging"),
            LabelKind::BioTagging => write!(f, "bio-tagging"),
        }
    }
}

impl LabelKind {
    pub fn is_sequence(self) -> bool {
        !matches!(self, LabelKind::Classification)
    }
}

/// Interned label handle. External formats always carry label strings;
/// counting loops work on these instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelId(pub u32);

/// Ordered set of label strings with an interning index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
    index: HashMap<String, u32>,
    kind: LabelKind,
}

impl LabelSet {
    pub fn new(labels: Vec<String>, kind: LabelKind) -> Result<Self> {
        if labels.is_empty() {
            return Err(CorpusError::EmptyLabelSet);
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if kind == LabelKind::BioTagging && !is_valid_bio_tag(label) {
                return Err(CorpusError::InvalidBioLabel(label.clone()));
            }
            if index.insert(label.clone(), i as u32).is_some() {
                return Err(CorpusError::DuplicateLabel(label.clone()));
            }
        }
        Ok(Self {
            labels,
            index,
            kind,
        })
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<LabelId> {
        self.index.get(label).copied().map(LabelId)
    }

    pub fn name(&self, id: LabelId) -> &str {
        &self.labels[id.0 as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }

    pub fn require(&self, label: &str) -> Result<LabelId> {
        self.id(label).ok_or_else(|| CorpusError::UnknownLabel {
            label: label.to_string(),
            known: self.labels.clone(),
        })
    }
}

/// "O", or "B-X"/"I-X" with a non-empty type.
fn is_valid_bio_tag(label: &str) -> bool {
    label == "O"
        || ((label.starts_with("B-") || label.starts_with("I-")) && label.len() > 2)
}

/// One sequence-labeling example: tokens with aligned labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub labels: Vec<String>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>, labels: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(CorpusError::EmptySentence);
        }
        if tokens.len() != labels.len() {
            return Err(CorpusError::LengthMismatch {
                tokens: tokens.len(),
                labels: labels.len(),
            });
        }
        if let Some(position) = tokens.iter().position(|t| t.is_empty()) {
            return Err(CorpusError::EmptyToken { position });
        }
        Ok(Self { tokens, labels })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One classification example: a text pair (second side optional) and a label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClsExample {
    pub text_a: String,
    pub text_b: Option<String>,
    pub label: String,
}

impl ClsExample {
    pub fn new(text_a: String, text_b: Option<String>, label: String) -> Result<Self> {
        if text_a.is_empty() {
            return Err(CorpusError::EmptyTextA);
        }
        Ok(Self {
            text_a,
            text_b,
            label,
        })
    }

    /// The full text of the example, both sides joined by a space.
    pub fn full_text(&self) -> String {
        match &self.text_b {
            Some(b) => format!("{} {}", self.text_a, b),
            None => self.text_a.clone(),
        }
    }
}

/// Parses CoNLL-style sequence-labeling data.
///
/// Lines are `token<TAB>label`; a blank line ends the current sentence.
/// Lines starting with `#` before the first token line of a sentence are
/// metadata and skipped (UD files carry them). A `#` line between token
/// lines is rejected as malformed.
pub fn parse_conll(input: &str) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut labels: Vec<String> = Vec::new();

    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            if !tokens.is_empty() {
                sentences.push(Sentence::new(
                    std::mem::take(&mut tokens),
                    std::mem::take(&mut labels),
                )?);
            }
            continue;
        }
        if line.starts_with('#') && tokens.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let token = fields.next().unwrap_or("");
        let label = match fields.next() {
            Some(l) => l,
            None => {
                return Err(CorpusError::FieldCount {
                    line: lineno,
                    expected: 2,
                    found: 1,
                })
            }
        };
        let extra = fields.count();
        if extra > 0 {
            return Err(CorpusError::FieldCount {
                line: lineno,
                expected: 2,
                found: 2 + extra,
            });
        }
        if token.is_empty() {
            return Err(CorpusError::Malformed {
                line: lineno,
                msg: "empty token".into(),
            });
        }
        if label.is_empty() {
            return Err(CorpusError::Malformed {
                line: lineno,
                msg: "empty label".into(),
            });
        }
        tokens.push(token.to_string());
        labels.push(label.to_string());
    }
    if !tokens.is_empty() {
        sentences.push(Sentence::new(tokens, labels)?);
    }
    if sentences.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    Ok(sentences)
}

/// Inverse of [`parse_conll`]; blank line between sentences, trailing newline.
pub fn serialize_conll(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for (i, s) in sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for (token, label) in s.tokens.iter().zip(&s.labels) {
            out.push_str(token);
            out.push('\t');
            out.push_str(label);
            out.push('\n');
        }
    }
    out
}

/// Parses classification TSV: `text_a<TAB>text_b<TAB>label`, no header.
/// An empty `text_b` field means the example has no second text.
pub fn parse_cls_tsv(input: &str) -> Result<Vec<ClsExample>> {
    let mut examples = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(CorpusError::FieldCount {
                line: lineno,
                expected: 3,
                found: fields.len(),
            });
        }
        if fields[0].is_empty() {
            return Err(CorpusError::Malformed {
                line: lineno,
                msg: "empty text_a".into(),
            });
        }
        if fields[2].is_empty() {
            return Err(CorpusError::Malformed {
                line: lineno,
                msg: "empty label".into(),
            });
        }
        let text_b = if fields[1].is_empty() {
            None
        } else {
            Some(fields[1].to_string())
        };
        examples.push(ClsExample {
            text_a: fields[0].to_string(),
            text_b,
            label: fields[2].to_string(),
        });
    }
    Ok(examples)
}

/// Inverse of [`parse_cls_tsv`]; absent `text_b` serializes as empty field.
pub fn serialize_cls_tsv(examples: &[ClsExample]) -> String {
    let mut out = String::new();
    for e in examples {
        out.push_str(&e.text_a);
        out.push('\t');
        if let Some(b) = &e.text_b {
            out.push_str(b);
        }
        out.push('\t');
        out.push_str(&e.label);
        out.push('\n');
    }
    out
}

/// A position where an `I-X` label follows neither `B-X` nor `I-X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BioViolation {
    pub position: usize,
}

/// Reports BIO grammar violations in a sentence's labels. Never fails;
/// repair policy is the metrics module's concern.
pub fn validate_bio(sentence: &Sentence) -> Vec<BioViolation> {
    let mut violations = Vec::new();
    for (i, label) in sentence.labels.iter().enumerate() {
        let Some(entity) = label.strip_prefix("I-") else {
            continue;
        };
        let continues = i > 0 && {
            let prev = &sentence.labels[i - 1];
            prev.strip_prefix("B-") == Some(entity) || prev.strip_prefix("I-") == Some(entity)
        };
        if !continues {
            violations.push(BioViolation { position: i });
        }
    }
    violations
}

/// Anything that contributes words to a vocabulary.
pub trait Words {
    fn words(&self, out: &mut BTreeSet<String>);
}

impl Words for Sentence {
    fn words(&self, out: &mut BTreeSet<String>) {
        for t in &self.tokens {
            out.insert(t.clone());
        }
    }
}

impl Words for ClsExample {
    fn words(&self, out: &mut BTreeSet<String>) {
        for t in self.text_a.split_whitespace() {
            out.insert(t.to_string());
        }
        if let Some(b) = &self.text_b {
            for t in b.split_whitespace() {
                out.insert(t.to_string());
            }
        }
    }
}

/// Case-sensitive word set: token set for sentences, whitespace-token set
/// for classification texts. Case folding, when wanted, is applied to the
/// text before calling this.
pub fn vocabulary<'a, W, I>(items: I) -> BTreeSet<String>
where
    W: Words + 'a,
    I: IntoIterator<Item = &'a W>,
{
    let mut out = BTreeSet::new();
    for item in items {
        item.words(&mut out);
    }
    out
}

/// Split names a dataset may carry.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Dev => write!(f, "dev"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// Examples of one split, matching the task kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Examples {
    Cls(Vec<ClsExample>),
    Seq(Vec<Sentence>),
}

impl Examples {
    pub fn len(&self) -> usize {
        match self {
            Examples::Cls(v) => v.len(),
            Examples::Seq(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_cls(&self) -> Option<&[ClsExample]> {
        match self {
            Examples::Cls(v) => Some(v),
            Examples::Seq(_) => None,
        }
    }

    pub fn as_seq(&self) -> Option<&[Sentence]> {
        match self {
            Examples::Seq(v) => Some(v),
            Examples::Cls(_) => None,
        }
    }

    pub fn vocabulary(&self) -> BTreeSet<String> {
        match self {
            Examples::Cls(v) => vocabulary(v),
            Examples::Seq(v) => vocabulary(v),
        }
    }
}

/// A task/language corpus: validated splits plus the task's label set.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub task: String,
    pub language: String,
    pub splits: BTreeMap<Split, Examples>,
    pub label_set: LabelSet,
}

impl Dataset {
    pub fn new(
        task: String,
        language: String,
        splits: BTreeMap<Split, Examples>,
        label_set: LabelSet,
    ) -> Result<Self> {
        for (split, examples) in &splits {
            match (examples, label_set.kind()) {
                (Examples::Cls(v), LabelKind::Classification) => {
                    for e in v {
                        label_set.require(&e.label)?;
                    }
                }
                (Examples::Seq(v), LabelKind::TokenTagging | LabelKind::BioTagging) => {
                    for s in v {
                        for label in &s.labels {
                            label_set.require(label)?;
                        }
                    }
                }
                (found, kind) => {
                    return Err(CorpusError::SplitKindMismatch {
                        split: *split,
                        kind,
                        expected: if kind == LabelKind::Classification {
                            "classification examples"
                        } else {
                            "sentences"
                        },
                        found: match found {
                            Examples::Cls(_) => "classification examples",
                            Examples::Seq(_) => "sentences",
                        },
                    })
                }
            }
        }
        Ok(Self {
            task,
            language,
            splits,
            label_set,
        })
    }

    pub fn split(&self, split: Split) -> Option<&Examples> {
        self.splits.get(&split)
    }

    pub fn has_train(&self) -> bool {
        self.splits.contains_key(&Split::Train)
    }
}

/// One task entry of a manifest: label set kind, label strings, and the
/// per-language split files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: LabelKind,
    pub labels: Vec<String>,
    /// language -> split -> path (relative to the manifest file).
    pub files: BTreeMap<String, BTreeMap<Split, PathBuf>>,
}

/// Maps task/language/split to data files and declares label sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tasks: BTreeMap<String, TaskSpec>,
    /// Directory paths are resolved against; set by [`Manifest::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut manifest: Manifest =
            toml::from_str(&text).map_err(|source| CorpusError::ManifestSyntax {
                path: path.to_path_buf(),
                source: Box::new(source),
            })?;
        manifest.base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(manifest)
    }

    pub fn task(&self, task: &str) -> Result<&TaskSpec> {
        self.tasks
            .get(task)
            .ok_or_else(|| CorpusError::UnknownTask(task.to_string()))
    }

    pub fn languages(&self, task: &str) -> Result<Vec<String>> {
        Ok(self.task(task)?.files.keys().cloned().collect())
    }

    /// Reads and validates all splits of one (task, language) cell.
    pub fn load_dataset(&self, task: &str, language: &str) -> Result<Dataset> {
        let spec = self.task(task)?;
        let files = spec
            .files
            .get(language)
            .ok_or_else(|| CorpusError::UnknownLanguage {
                task: task.to_string(),
                language: language.to_string(),
            })?;
        let label_set = LabelSet::new(spec.labels.clone(), spec.kind)?;
        let mut splits = BTreeMap::new();
        for (split, rel_path) in files {
            let path = self.base_dir.join(rel_path);
            let text = std::fs::read_to_string(&path)
                .map_err(|source| CorpusError::Io { path, source })?;
            let examples = match spec.kind {
                LabelKind::Classification => Examples::Cls(parse_cls_tsv(&text)?),
                LabelKind::TokenTagging | LabelKind::BioTagging => {
                    Examples::Seq(parse_conll(&text)?)
                }
            };
            splits.insert(*split, examples);
        }
        Dataset::new(task.to_string(), language.to_string(), splits, label_set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(tokens: &[&str], labels: &[&str]) -> Sentence {
        Sentence::new(
            tokens.iter().map(|s| s.to_string()).collect(),
            labels.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn parse_conll_splits_on_blank_lines() {
        let parsed = parse_conll("a\tB-PER\nb\tO\n\nc\tO\n").unwrap();
        assert_eq!(
            parsed,
            vec![sent(&["a", "b"], &["B-PER", "O"]), sent(&["c"], &["O"])]
        );
    }

    #[test]
    fn parse_conll_rejects_empty_input() {
        assert!(matches!(parse_conll(""), Err(CorpusError::EmptyInput)));
        assert!(matches!(parse_conll("\n\n"), Err(CorpusError::EmptyInput)));
    }

    #[test]
    fn parse_conll_reports_line_numbers() {
        let err = parse_conll("a\tO\nbroken line\nb\tO\n").unwrap_err();
        match err {
            CorpusError::FieldCount { line, found, .. } => {
                assert_eq!(line, 2);
                assert_eq!(found, 1);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn parse_conll_skips_leading_comments_only() {
        let parsed = parse_conll("# sent_id = 1\na\tO\n\n# doc\n# more\nb\tO\n").unwrap();
        assert_eq!(parsed.len(), 2);
        // a comment between token lines is malformed
        assert!(parse_conll("a\tO\n# mid\nb\tO\n").is_err());
    }

    #[test]
    fn parse_conll_ignores_trailing_blank_lines() {
        let parsed = parse_conll("a\tO\n\n\n\n").unwrap();
        assert_eq!(parsed.len(), 1);
    }

    #[test]
    fn cls_tsv_parses_text_pairs() {
        let line = "Très mignons et de bonne qualité. La figurine est assez imposante \
                    mais conforme à la taille indiquée dans le descriptif.\tJolis détails . home\t5\n";
        let parsed = parse_cls_tsv(line).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].text_b.as_deref(), Some("Jolis détails . home"));
        assert_eq!(parsed[0].label, "5");
    }

    #[test]
    fn cls_tsv_empty_second_field_is_absent() {
        let parsed = parse_cls_tsv("hello\t\tpos\n").unwrap();
        assert_eq!(parsed[0].text_b, None);
    }

    #[test]
    fn cls_tsv_rejects_wrong_field_count() {
        let err = parse_cls_tsv("a\tb\n").unwrap_err();
        match err {
            CorpusError::FieldCount { line, found, .. } => {
                assert_eq!(line, 1);
                assert_eq!(found, 2);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn validate_bio_flags_orphans_and_type_switches() {
        assert!(validate_bio(&sent(&["a", "b", "c"], &["B-PER", "I-PER", "O"])).is_empty());
        assert_eq!(
            validate_bio(&sent(&["a", "b"], &["I-PER", "O"])),
            vec![BioViolation { position: 0 }]
        );
        assert_eq!(
            validate_bio(&sent(&["a", "b"], &["B-ORG", "I-LOC"])),
            vec![BioViolation { position: 1 }]
        );
    }

    /// Independent acceptance check for BIO sequences: a tiny automaton over
    /// (prefix, type) pairs. `validate_bio` must agree: no violations iff
    /// the automaton accepts.
    fn bio_automaton_accepts(labels: &[&str]) -> bool {
        let mut prev: Option<&str> = None; // entity type continuing from previous position
        for label in labels {
            prev = if *label == "O" {
                None
            } else if let Some(t) = label.strip_prefix("B-") {
                Some(t)
            } else if let Some(t) = label.strip_prefix("I-") {
                match prev {
                    Some(p) if p == t => Some(t),
                    _ => return false,
                }
            } else {
                None
            };
        }
        true
    }

    #[test]
    fn validate_bio_matches_automaton_on_all_length2_pairs() {
        let alphabet = ["O", "B-PER", "I-PER", "B-ORG", "I-ORG"];
        for a in alphabet {
            for b in alphabet {
                let s = sent(&["x", "y"], &[a, b]);
                let violations = validate_bio(&s);
                assert_eq!(
                    violations.is_empty(),
                    bio_automaton_accepts(&[a, b]),
                    "disagreement on [{a}, {b}]"
                );
            }
        }
    }

    #[test]
    fn vocabulary_unions_and_is_case_sensitive() {
        let sents = vec![sent(&["a", "b"], &["O", "O"]), sent(&["b", "C"], &["O", "O"])];
        let vocab = vocabulary(&sents);
        assert_eq!(
            vocab.iter().map(String::as_str).collect::<Vec<_>>(),
            vec!["C", "a", "b"]
        );
        let empty: Vec<Sentence> = vec![];
        assert!(vocabulary(&empty).is_empty());
    }

    #[test]
    fn vocabulary_splits_cls_text_on_whitespace() {
        let e = ClsExample::new("Hello  world".into(), Some("world again".into()), "x".into())
            .unwrap();
        let vocab = vocabulary(std::slice::from_ref(&e));
        assert_eq!(
            vocab.iter().map(String::as_str).collect::<Vec<_>>(),
            vec!["Hello", "again", "world"]
        );
    }

    #[test]
    fn label_set_validates_bio_shape_and_uniqueness() {
        assert!(LabelSet::new(vec![], LabelKind::Classification).is_err());
        assert!(
            LabelSet::new(vec!["a".into(), "a".into()], LabelKind::Classification).is_err()
        );
        assert!(LabelSet::new(
            vec!["O".into(), "B-PER".into(), "PER".into()],
            LabelKind::BioTagging
        )
        .is_err());
        let ok = LabelSet::new(
            vec!["O".into(), "B-PER".into(), "I-PER".into()],
            LabelKind::BioTagging,
        )
        .unwrap();
        assert_eq!(ok.id("B-PER"), Some(LabelId(1)));
        assert_eq!(ok.name(LabelId(2)), "I-PER");
    }

    #[test]
    fn dataset_rejects_labels_outside_the_set() {
        let labels = LabelSet::new(vec!["pos".into(), "neg".into()], LabelKind::Classification)
            .unwrap();
        let mut splits = BTreeMap::new();
        splits.insert(
            Split::Train,
            Examples::Cls(vec![ClsExample::new("x".into(), None, "meh".into()).unwrap()]),
        );
        assert!(Dataset::new("t".into(), "en".into(), splits, labels).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn token_strategy() -> impl Strategy<Value = String> {
            // printable, no whitespace/tabs, non-empty, no leading '#'
            "[a-zA-Z0-9,.;À-ÿ]{1,12}"
        }

        fn sentence_strategy() -> impl Strategy<Value = Sentence> {
            prop::collection::vec((token_strategy(), "[A-Z]{1,3}"), 1..12).prop_map(|pairs| {
                let (tokens, labels) = pairs.into_iter().unzip();
                Sentence::new(tokens, labels).unwrap()
            })
        }

        proptest! {
            #[test]
            fn conll_round_trips(sentences in prop::collection::vec(sentence_strategy(), 1..40)) {
                let text = serialize_conll(&sentences);
                prop_assert_eq!(parse_conll(&text).unwrap(), sentences);
            }

            #[test]
            fn cls_tsv_round_trips_byte_identically(
                rows in prop::collection::vec(
                    (token_strategy(), prop::option::of(token_strategy()), "[a-z0-9]{1,4}"),
                    1..40,
                )
            ) {
                let examples: Vec<ClsExample> = rows
                    .into_iter()
                    .map(|(a, b, l)| ClsExample::new(a, b, l).unwrap())
                    .collect();
                let text = serialize_cls_tsv(&examples);
                prop_assert_eq!(parse_cls_tsv(&text).unwrap(), examples.clone());
                prop_assert_eq!(serialize_cls_tsv(&parse_cls_tsv(&text).unwrap()), text);
            }

            #[test]
            fn vocabulary_is_monotone_under_union(
                xs in prop::collection::vec(sentence_strategy(), 0..10),
                ys in prop::collection::vec(sentence_strategy(), 0..10),
            ) {
                let vx = vocabulary(&xs);
                let both: Vec<Sentence> = xs.iter().chain(ys.iter()).cloned().collect();
                let vboth = vocabulary(&both);
                prop_assert!(vx.is_subset(&vboth));
            }

            #[test]
            fn vocabulary_is_order_independent(
                mut xs in prop::collection::vec(sentence_strategy(), 0..10)
            ) {
                let forward = vocabulary(&xs);
                xs.reverse();
                prop_assert_eq!(vocabulary(&xs), forward.clone());
                // idempotent: feeding the union again changes nothing
                let again = vocabulary(&xs);
                prop_assert_eq!(again, forward);
            }

            #[test]
            fn large_conll_file_round_trips(
                sentences in prop::collection::vec(sentence_strategy(), 1000..1001)
            ) {
                let text = serialize_conll(&sentences);
                prop_assert_eq!(parse_conll(&text).unwrap(), sentences);
            }
        }
    }
}
