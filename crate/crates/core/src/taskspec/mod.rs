//! Tasks, corpus manifests, statistics, pseudotask composition and prompt templates.

pub mod prompts;
pub mod snapshot;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use prompts::{render_instruction_prompt, InstructionKind, MissingPlaceholder};
pub use snapshot::{tree_digest, FileTree};

use crate::assertlang::{load_suite, AssertionSuite, SchemaError};
use crate::evaluator::patch::Patch;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionSet {
    pub lazy: String,
    pub base: String,
    pub descriptive: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskInstance {
    pub id: String,
    pub repo_id: String,
    /// Suite document, relative to the manifest.
    pub suite: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_patch: Option<String>,
    pub instructions: InstructionSet,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepoEntry {
    pub repo_id: String,
    /// Directory or `.tar` archive, relative to the manifest.
    pub snapshot: String,
    /// Tree digest; for archives it may instead come from the `.sha256` sidecar.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub corpus: String,
    pub grammar_version: String,
    pub repos: Vec<RepoEntry>,
    pub tasks: Vec<TaskInstance>,
}

impl CorpusManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("schema error at {0}")]
    Schema(#[from] SchemaError),
    #[error("snapshot of {repo_id} has digest {actual}, manifest expects {expected}")]
    DigestMismatch { repo_id: String, expected: String, actual: String },
}

fn schema(location: impl Into<String>, reason: impl Into<String>) -> ManifestError {
    ManifestError::Schema(SchemaError { location: location.into(), reason: reason.into() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSuite {
    pub suite: AssertionSuite,
    /// Line count of the suite document.
    pub lines: usize,
}

/// A validated manifest with its suites loaded and snapshot digests checked.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub base_dir: PathBuf,
    pub suites: BTreeMap<String, LoadedSuite>,
    /// Verified digest per repo id.
    pub digests: BTreeMap<String, String>,
}

fn read_text(path: &Path) -> Result<String, ManifestError> {
    std::fs::read_to_string(path)
        .map_err(|e| ManifestError::Io { path: path.display().to_string(), reason: e.to_string() })
}

pub fn load_manifest(path: &Path) -> Result<Corpus, ManifestError> {
    let text = read_text(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    load_manifest_str(&text, &base)
}

/// Validate a manifest document whose relative references resolve against `base_dir`.
/// Point at the first unexpected key rather than relying on serde's unlocated message.
fn unknown_keys(value: &serde_json::Value) -> Result<(), ManifestError> {
    fn check(v: &serde_json::Value, loc: &str, allowed: &[&str]) -> Result<(), ManifestError> {
        if let Some(obj) = v.as_object() {
            if let Some(k) = obj.keys().find(|k| !allowed.contains(&k.as_str())) {
                let at = if loc.is_empty() { k.clone() } else { format!("{loc}.{k}") };
                return Err(schema(at, "unknown field"));
            }
        }
        Ok(())
    }
    check(value, "", &["schema_version", "corpus", "grammar_version", "repos", "tasks"])?;
    for (i, r) in value["repos"].as_array().into_iter().flatten().enumerate() {
        check(r, &format!("repos[{i}]"), &["repo_id", "snapshot", "digest"])?;
    }
    for (i, t) in value["tasks"].as_array().into_iter().flatten().enumerate() {
        let loc = format!("tasks[{i}]");
        check(t, &loc, &["id", "repo_id", "suite", "reference_patch", "instructions", "metadata"])?;
        check(&t["instructions"], &format!("{loc}.instructions"), &["lazy", "base", "descriptive"])?;
    }
    Ok(())
}

pub fn load_manifest_str(document: &str, base_dir: &Path) -> Result<Corpus, ManifestError> {
    let value: serde_json::Value = serde_json::from_str(document).map_err(|e| schema("$", e.to_string()))?;
    unknown_keys(&value)?;
    let manifest: CorpusManifest = serde_json::from_value(value).map_err(|e| schema("$", e.to_string()))?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(schema("schema_version", format!("unsupported version {}", manifest.schema_version)));
    }
    if manifest.grammar_version != crate::pytree::GRAMMAR_VERSION {
        return Err(schema(
            "grammar_version",
            format!("corpus pins {}, parser implements {}", manifest.grammar_version, crate::pytree::GRAMMAR_VERSION),
        ));
    }
    let mut digests = BTreeMap::new();
    for (i, repo) in manifest.repos.iter().enumerate() {
        let loc = format!("repos[{i}]");
        if repo.repo_id.is_empty() {
            return Err(schema(format!("{loc}.repo_id"), "must be non-empty"));
        }
        if digests.contains_key(&repo.repo_id) {
            return Err(schema(format!("{loc}.repo_id"), format!("duplicate repo id '{}'", repo.repo_id)));
        }
        let snap = base_dir.join(&repo.snapshot);
        let expected = match &repo.digest {
            Some(d) => d.clone(),
            None => read_text(&snapshot::sidecar_path(&snap))
                .map_err(|_| schema(format!("{loc}.digest"), "missing digest and no sidecar"))?
                .trim()
                .to_string(),
        };
        let files = snapshot::read_snapshot(&snap)
            .map_err(|e| schema(format!("{loc}.snapshot"), format!("{}: {e}", repo.snapshot)))?;
        let actual = tree_digest(&files);
        if actual != expected {
            return Err(ManifestError::DigestMismatch { repo_id: repo.repo_id.clone(), expected, actual });
        }
        digests.insert(repo.repo_id.clone(), actual);
    }
    let mut seen = HashSet::new();
    let mut suites = BTreeMap::new();
    for (i, task) in manifest.tasks.iter().enumerate() {
        let loc = format!("tasks[{i}]");
        if task.id.is_empty() {
            return Err(schema(format!("{loc}.id"), "must be non-empty"));
        }
        if !seen.insert(task.id.as_str()) {
            return Err(schema(format!("{loc}.id"), format!("duplicate task id '{}'", task.id)));
        }
        if !digests.contains_key(&task.repo_id) {
            return Err(schema(format!("{loc}.repo_id"), format!("unknown repo '{}'", task.repo_id)));
        }
        let ins = &task.instructions;
        for (field, text) in [("lazy", &ins.lazy), ("base", &ins.base), ("descriptive", &ins.descriptive)] {
            if text.trim().is_empty() {
                return Err(schema(format!("{loc}.instructions.{field}"), "must be non-empty"));
            }
        }
        let suite_path = base_dir.join(&task.suite);
        let text = std::fs::read_to_string(&suite_path)
            .map_err(|e| schema(format!("{loc}.suite"), format!("{} does not resolve: {e}", task.suite)))?;
        let suite = load_suite(&text).map_err(|e| schema(format!("{loc}.suite"), format!("{}: {e}", task.suite)))?;
        if suite.task_id != task.id {
            return Err(schema(format!("{loc}.suite"), format!("suite is for task '{}'", suite.task_id)));
        }
        if let Some(p) = &task.reference_patch {
            if !base_dir.join(p).is_file() {
                return Err(schema(format!("{loc}.reference_patch"), format!("{p} does not resolve")));
            }
        }
        suites.insert(task.id.clone(), LoadedSuite { suite, lines: snapshot::line_count(text.as_bytes()) });
    }
    Ok(Corpus { manifest, base_dir: base_dir.to_path_buf(), suites, digests })
}

impl Corpus {
    pub fn task(&self, id: &str) -> Option<&TaskInstance> {
        self.manifest.tasks.iter().find(|t| t.id == id)
    }

    pub fn repo(&self, repo_id: &str) -> Option<&RepoEntry> {
        self.manifest.repos.iter().find(|r| r.repo_id == repo_id)
    }

    pub fn suite(&self, task_id: &str) -> Option<&AssertionSuite> {
        self.suites.get(task_id).map(|s| &s.suite)
    }

    pub fn snapshot_path(&self, repo_id: &str) -> Option<PathBuf> {
        self.repo(repo_id).map(|r| self.base_dir.join(&r.snapshot))
    }

    /// Snapshot files; unverified (the evaluator re-checks the digest).
    pub fn snapshot_files(&self, repo_id: &str) -> std::io::Result<FileTree> {
        let path = self
            .snapshot_path(repo_id)
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::NotFound, format!("unknown repo {repo_id}")))?;
        snapshot::read_snapshot(&path)
    }

    pub fn reference_patch_text(&self, task_id: &str) -> Option<std::io::Result<String>> {
        let rel = self.task(task_id)?.reference_patch.as_ref()?;
        Some(std::fs::read_to_string(self.base_dir.join(rel)))
    }
}

// ---- statistics ----

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub max: u64,
}

impl Aggregate {
    /// `None` for an empty column. The mean is an exact integer sum divided once.
    pub fn of(values: &[u64]) -> Option<Aggregate> {
        let max = *values.iter().max()?;
        let sum: u64 = values.iter().sum();
        Some(Aggregate { mean: sum as f64 / values.len() as f64, max })
    }
}

/// Per-task aggregates; a repository shared by several tasks counts once per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub tasks: usize,
    pub repos: usize,
    pub lazy_words: Aggregate,
    pub base_words: Aggregate,
    pub descriptive_words: Aggregate,
    pub repo_files: Aggregate,
    pub repo_lines: Aggregate,
    pub suite_length: Aggregate,
    pub suite_lines: Aggregate,
    pub target_files: Aggregate,
    /// Over tasks that ship a reference patch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_files_edited: Option<Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("{0}")]
    Unreadable(String),
}

pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats, StatsError> {
    let tasks = &corpus.manifest.tasks;
    if tasks.is_empty() {
        return Err(StatsError::EmptyCorpus);
    }
    let mut repo_cache: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    let mut cols: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    let mut push = |k: &'static str, v: usize| cols.entry(k).or_default().push(v as u64);
    for t in tasks {
        push("lazy", word_count(&t.instructions.lazy));
        push("base", word_count(&t.instructions.base));
        push("descriptive", word_count(&t.instructions.descriptive));
        if !repo_cache.contains_key(t.repo_id.as_str()) {
            let files = corpus.snapshot_files(&t.repo_id).map_err(|e| StatsError::Unreadable(e.to_string()))?;
            let lines: usize = files.values().map(|b| snapshot::line_count(b)).sum();
            repo_cache.insert(&t.repo_id, (files.len() as u64, lines as u64));
        }
        let (files, lines) = repo_cache[t.repo_id.as_str()];
        push("repo_files", files as usize);
        push("repo_lines", lines as usize);
        let loaded = &corpus.suites[&t.id];
        push("suite_length", loaded.suite.assertions.len());
        push("suite_lines", loaded.lines);
        push("target_files", derive_target_files(&loaded.suite).len());
        if let Some(text) = corpus.reference_patch_text(&t.id) {
            let text = text.map_err(|e| StatsError::Unreadable(e.to_string()))?;
            let patch = Patch::parse(&text).map_err(|e| StatsError::Unreadable(format!("{}: {e}", t.id)))?;
            push("reference", patch.touched_paths().len());
        }
    }
    let agg = |k: &str| Aggregate::of(cols.get(k).map_or(&[][..], |v| v));
    Ok(CorpusStats {
        tasks: tasks.len(),
        repos: corpus.manifest.repos.len(),
        lazy_words: agg("lazy").unwrap(),
        base_words: agg("base").unwrap(),
        descriptive_words: agg("descriptive").unwrap(),
        repo_files: agg("repo_files").unwrap(),
        repo_lines: agg("repo_lines").unwrap(),
        suite_length: agg("suite_length").unwrap(),
        suite_lines: agg("suite_lines").unwrap(),
        target_files: agg("target_files").unwrap(),
        reference_files_edited: agg("reference"),
    })
}

// ---- suites, targets, pseudotasks ----

/// Distinct file paths the suite's assertions refer to.
pub fn derive_target_files(suite: &AssertionSuite) -> BTreeSet<String> {
    suite.assertions.iter().map(|a| a.path.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoTask {
    pub task_ids: Vec<String>,
    pub repo_id: String,
    pub combined_instruction: String,
    pub suite: AssertionSuite,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ComposeError {
    #[error("a pseudotask needs at least two tasks")]
    TooFew,
    #[error("unknown task '{0}'")]
    UnknownTask(String),
    #[error("task '{0}' listed twice")]
    DuplicateTask(String),
    #[error("tasks span repositories {0} and {1}")]
    MixedRepo(String, String),
    #[error("prefixed assertion id '{0}' collides")]
    IdCollision(String),
}

/// Assertion-id-safe form of a task id.
pub fn id_prefix(task_id: &str) -> String {
    task_id.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect()
}

/// Join descriptive instructions with a newline and union the suites, prefixing ids with `<task>__`.
pub fn compose_pseudotask(corpus: &Corpus, task_ids: &[&str]) -> Result<PseudoTask, ComposeError> {
    let mut seen = HashSet::new();
    let mut tasks = Vec::new();
    for id in task_ids {
        let t = corpus.task(id).ok_or_else(|| ComposeError::UnknownTask(id.to_string()))?;
        if !seen.insert(*id) {
            return Err(ComposeError::DuplicateTask(id.to_string()));
        }
        tasks.push(t);
    }
    if tasks.len() < 2 {
        return Err(ComposeError::TooFew);
    }
    let repo_id = tasks[0].repo_id.clone();
    if let Some(other) = tasks.iter().find(|t| t.repo_id != repo_id) {
        return Err(ComposeError::MixedRepo(repo_id, other.repo_id.clone()));
    }
    let combined_instruction = tasks.iter().map(|t| t.instructions.descriptive.as_str()).collect::<Vec<_>>().join("\n");
    let mut ids = HashSet::new();
    let mut assertions = Vec::new();
    for t in &tasks {
        let prefix = id_prefix(&t.id);
        for a in &corpus.suites[&t.id].suite.assertions {
            let mut a = a.clone();
            a.id = format!("{prefix}__{}", a.id);
            if !ids.insert(a.id.clone()) {
                return Err(ComposeError::IdCollision(a.id));
            }
            assertions.push(a);
        }
    }
    let suite = AssertionSuite {
        schema_version: crate::assertlang::SUITE_SCHEMA_VERSION,
        task_id: task_ids.join("+"),
        assertions,
    };
    Ok(PseudoTask { task_ids: task_ids.iter().map(|s| s.to_string()).collect(), repo_id, combined_instruction, suite })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetOverlap {
    pub first: String,
    pub second: String,
    pub shared: BTreeSet<String>,
}

/// Same-repo task pairs whose suites reference a common file. Heuristic only: sharing a file
/// does not imply the tasks conflict.
pub fn overlap_report(corpus: &Corpus) -> Vec<TargetOverlap> {
    let tasks = &corpus.manifest.tasks;
    let targets: Vec<BTreeSet<String>> =
        tasks.iter().map(|t| derive_target_files(&corpus.suites[&t.id].suite)).collect();
    let mut out = Vec::new();
    for i in 0..tasks.len() {
        for j in i + 1..tasks.len() {
            if tasks[i].repo_id != tasks[j].repo_id {
                continue;
            }
            let shared: BTreeSet<String> = targets[i].intersection(&targets[j]).cloned().collect();
            if !shared.is_empty() {
                out.push(TargetOverlap { first: tasks[i].id.clone(), second: tasks[j].id.clone(), shared });
            }
        }
    }
    out
}
