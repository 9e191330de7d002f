//! Isolated workspaces, patch application, suite execution, scoring and reports.

pub mod patch;
pub mod report;
mod workspace;

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use patch::{Patch, PatchError};
pub use report::{parse_machine_report, render_batch, render_report, ReportFormat, REPORT_SCHEMA_VERSION};
pub use workspace::Workspace;

use crate::assertlang::{run_suite, AssertionOutcome, AssertionSuite, Status};
use crate::taskspec::{derive_target_files, tree_digest, Corpus};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("unknown task '{0}'")]
    UnknownTask(String),
    #[error("snapshot of {repo_id} has digest {actual}, expected {expected}")]
    DigestMismatch { repo_id: String, expected: String, actual: String },
    #[error("i/o failure: {0}")]
    Io(String),
}

/// Fresh copy of the task's repository snapshot, digest-verified.
pub fn materialize_workspace(corpus: &Corpus, task_id: &str) -> Result<Workspace, EvalError> {
    let task = corpus.task(task_id).ok_or_else(|| EvalError::UnknownTask(task_id.to_string()))?;
    materialize_repo(corpus, &task.repo_id, task_id)
}

fn materialize_repo(corpus: &Corpus, repo_id: &str, label: &str) -> Result<Workspace, EvalError> {
    let expected = corpus.digests.get(repo_id).ok_or_else(|| EvalError::UnknownTask(label.to_string()))?;
    let files = corpus.snapshot_files(repo_id).map_err(|e| EvalError::Io(e.to_string()))?;
    let actual = tree_digest(&files);
    if &actual != expected {
        return Err(EvalError::DigestMismatch { repo_id: repo_id.to_string(), expected: expected.clone(), actual });
    }
    let ws = Workspace::from_files(label, &files).map_err(|e| EvalError::Io(e.to_string()))?;
    Ok(ws)
}

/// What a suite needs to be rendered: the kind and file behind each outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckRef {
    pub id: String,
    pub kind: String,
    pub path: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub suite_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub task_id: String,
    /// Label used in rendered test ids, e.g. the suite file stem.
    pub suite_label: String,
    /// Suite location shown in the text report.
    pub suite_file: String,
    pub resolved: bool,
    pub outcomes: Vec<AssertionOutcome>,
    pub checks: Vec<CheckRef>,
    pub subtask_rate: f64,
    pub files_edited: BTreeSet<String>,
    pub target_files: BTreeSet<String>,
    pub target_coverage: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_error: Option<String>,
    pub timings: Timings,
}

impl EvaluationReport {
    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| o.status == Status::Fail).count()
    }

    pub fn errors(&self) -> usize {
        self.outcomes.iter().filter(|o| o.status == Status::Error).count()
    }

    /// Copy with timings zeroed, for determinism comparisons.
    pub fn without_timings(&self) -> EvaluationReport {
        EvaluationReport { timings: Timings::default(), ..self.clone() }
    }
}

/// Fraction of target files the patch touched; 1.0 when there are no targets.
pub fn target_coverage(files_edited: &BTreeSet<String>, targets: &BTreeSet<String>) -> f64 {
    if targets.is_empty() {
        return 1.0;
    }
    targets.intersection(files_edited).count() as f64 / targets.len() as f64
}

/// Everything `evaluate_suite` needs besides the corpus.
pub struct SuiteJob<'a> {
    pub task_id: &'a str,
    pub repo_id: &'a str,
    pub suite: &'a AssertionSuite,
    pub suite_file: &'a str,
    pub patch_text: &'a str,
}

fn every(suite: &AssertionSuite, message: &str) -> Vec<AssertionOutcome> {
    suite.assertions.iter().map(|a| AssertionOutcome::error(&a.id, message)).collect()
}

/// Materialize, patch, run, score. Failures along the way become error outcomes.
pub fn evaluate_suite(corpus: &Corpus, job: &SuiteJob<'_>) -> EvaluationReport {
    let start = Instant::now();
    let suite = job.suite;
    let target_files = derive_target_files(suite);
    let mut files_edited = BTreeSet::new();
    let mut patch_error = None;
    let mut suite_seconds = 0.0;
    let outcomes = match materialize_repo(corpus, job.repo_id, job.task_id) {
        Err(e) => {
            patch_error = Some(e.to_string());
            every(suite, &format!("workspace unavailable: {e}"))
        }
        Ok(mut ws) => match Patch::parse(job.patch_text).and_then(|p| ws.apply_patch(&p)) {
            Err(e) => {
                patch_error = Some(e.to_string());
                every(suite, "patch rejected")
            }
            Ok(edited) => {
                files_edited = edited;
                let t = Instant::now();
                let out = run_suite(suite, &ws);
                suite_seconds = t.elapsed().as_secs_f64();
                out
            }
        },
    };
    let passed = outcomes.iter().filter(|o| o.passed()).count();
    let stem = Path::new(job.suite_file).file_stem().map(|s| s.to_string_lossy().into_owned());
    EvaluationReport {
        task_id: job.task_id.to_string(),
        suite_label: stem.unwrap_or_else(|| job.task_id.to_string()),
        suite_file: job.suite_file.to_string(),
        resolved: passed == outcomes.len(),
        subtask_rate: passed as f64 / outcomes.len().max(1) as f64,
        checks: suite
            .assertions
            .iter()
            .map(|a| CheckRef { id: a.id.clone(), kind: a.check.kind_name().to_string(), path: a.path.clone() })
            .collect(),
        outcomes,
        target_coverage: target_coverage(&files_edited, &target_files),
        files_edited,
        target_files,
        patch_error,
        timings: Timings { total_seconds: start.elapsed().as_secs_f64(), suite_seconds },
    }
}

/// Evaluate a candidate patch (unified-diff text; empty means no change) for one task.
pub fn evaluate_task(corpus: &Corpus, task_id: &str, patch_text: &str) -> Result<EvaluationReport, EvalError> {
    let task = corpus.task(task_id).ok_or_else(|| EvalError::UnknownTask(task_id.to_string()))?;
    let suite = corpus.suite(task_id).ok_or_else(|| EvalError::UnknownTask(task_id.to_string()))?;
    Ok(evaluate_suite(
        corpus,
        &SuiteJob { task_id, repo_id: &task.repo_id, suite, suite_file: &task.suite, patch_text },
    ))
}

/// Evaluate many (task, patch) pairs on up to `jobs` threads; output order follows input order.
pub fn evaluate_batch(
    corpus: &Corpus,
    items: &[(String, String)],
    jobs: usize,
) -> Result<Vec<EvaluationReport>, EvalError> {
    use rayon::prelude::*;
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| EvalError::Io(e.to_string()))?;
    pool.install(|| items.par_iter().map(|(task, patch)| evaluate_task(corpus, task, patch)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub tasks: usize,
    pub resolved: usize,
    pub resolution_rate: f64,
    pub mean_subtask_rate: f64,
    pub mean_target_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no reports to score")]
pub struct EmptyRun;

pub fn score_run(reports: &[EvaluationReport]) -> Result<RunScore, EmptyRun> {
    if reports.is_empty() {
        return Err(EmptyRun);
    }
    let n = reports.len() as f64;
    let resolved = reports.iter().filter(|r| r.resolved).count();
    Ok(RunScore {
        tasks: reports.len(),
        resolved,
        resolution_rate: resolved as f64 / n,
        mean_subtask_rate: reports.iter().map(|r| r.subtask_rate).sum::<f64>() / n,
        mean_target_coverage: reports.iter().map(|r| r.target_coverage).sum::<f64>() / n,
    })
}
