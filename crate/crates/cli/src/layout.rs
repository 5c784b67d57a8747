//! Output directory layout: one directory per experimental cell.
//!
//! ```text
//! out/<task>/<lang>/k<K>/buckets.jsonl     sampled buckets (published format)
//! out/<task>/<lang>/k<K>/results.csv       one row per adaptation run
//! out/<task>/<lang>/k<K>/traces.jsonl      per-epoch dev traces
//! out/<task>/<lang>/k<K>/reports/          per-cell reports and plots
//! out/<task>/<lang>/new_dev.tsv            remainder after dev carving
//! out/<task>/<lang>/zero_shot.csv          zero-shot test score
//! out/<task>/source_model.json             cached source checkpoint
//! out/<task>/reports/                      task-level tables
//! ```

use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct OutLayout {
    root: PathBuf,
}

impl OutLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn task_dir(&self, task: &str) -> PathBuf {
        self.root.join(task)
    }

    pub fn lang_dir(&self, task: &str, lang: &str) -> PathBuf {
        self.task_dir(task).join(lang)
    }

    pub fn cell_dir(&self, task: &str, lang: &str, k: u32) -> PathBuf {
        self.lang_dir(task, lang).join(format!("k{k}"))
    }

    pub fn buckets(&self, task: &str, lang: &str, k: u32) -> PathBuf {
        self.cell_dir(task, lang, k).join("buckets.jsonl")
    }

    pub fn results(&self, task: &str, lang: &str, k: u32) -> PathBuf {
        self.cell_dir(task, lang, k).join("results.csv")
    }

    pub fn traces(&self, task: &str, lang: &str, k: u32) -> PathBuf {
        self.cell_dir(task, lang, k).join("traces.jsonl")
    }

    pub fn cell_reports(&self, task: &str, lang: &str, k: u32) -> PathBuf {
        self.cell_dir(task, lang, k).join("reports")
    }

    pub fn new_dev(&self, task: &str, lang: &str) -> PathBuf {
        self.lang_dir(task, lang).join("new_dev.tsv")
    }

    pub fn zero_shot(&self, task: &str, lang: &str) -> PathBuf {
        self.lang_dir(task, lang).join("zero_shot.csv")
    }

    pub fn source_model(&self, task: &str) -> PathBuf {
        self.task_dir(task).join("source_model.json")
    }

    pub fn task_reports(&self, task: &str) -> PathBuf {
        self.task_dir(task).join("reports")
    }
}

/// Creates parent directories and writes atomically enough for our use:
/// full buffer to a temp file in the same directory, then rename.
pub fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    use anyhow::Context;
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating directory {}", dir.display()))?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}
