use std::path::{Path, PathBuf};

use clap::Args;
use refkit::evaluator::{evaluate_batch, render_batch, score_run, ReportFormat};
use refkit::taskspec::{compose_pseudotask, corpus_stats, load_manifest, overlap_report, Aggregate, Corpus};

use crate::{fail, write_output, CmdResult, Done, Format, OutputArgs, UsageError};

pub fn load(manifest: &Path) -> Result<Corpus, UsageError> {
    load_manifest(manifest).map_err(|e| UsageError(format!("{}: {e}", manifest.display())))
}

pub fn validate(manifest: &Path) -> CmdResult {
    let corpus = load(manifest)?;
    let m = &corpus.manifest;
    let assertions: usize = corpus.suites.values().map(|s| s.suite.assertions.len()).sum();
    println!("{}: {} tasks, {} repositories, {assertions} assertions", m.corpus, m.tasks.len(), m.repos.len());
    for o in overlap_report(&corpus) {
        let shared: Vec<&str> = o.shared.iter().map(String::as_str).collect();
        println!("note: {} and {} both target {}", o.first, o.second, shared.join(", "));
    }
    Ok(Done::Success)
}

#[derive(Args)]
pub struct EvalArgs {
    pub manifest: PathBuf,
    /// Directory of candidate patches named `<task-id>.diff`.
    pub patches: PathBuf,
    /// Evaluate only these tasks (default: all).
    #[arg(long = "task")]
    pub tasks: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn read_patch(dir: &Path, task_id: &str) -> Result<String, UsageError> {
    for ext in ["diff", "patch"] {
        let p = dir.join(format!("{task_id}.{ext}"));
        if p.exists() {
            return std::fs::read(&p)
                .map(|b| String::from_utf8_lossy(&b).into_owned())
                .map_err(|e| UsageError(format!("{}: {e}", p.display())));
        }
    }
    Ok(String::new())
}

pub fn eval(args: EvalArgs) -> CmdResult {
    let corpus = load(&args.manifest)?;
    if !args.patches.is_dir() {
        return fail(format!("{}: not a directory", args.patches.display()));
    }
    if args.output.format == Format::Machine && args.output.out.is_none() {
        return fail("--format machine needs --out");
    }
    let ids: Vec<String> = if args.tasks.is_empty() {
        corpus.manifest.tasks.iter().map(|t| t.id.clone()).collect()
    } else {
        args.tasks.clone()
    };
    let mut items = Vec::with_capacity(ids.len());
    for id in &ids {
        if corpus.task(id).is_none() {
            return fail(format!("unknown task '{id}'"));
        }
        items.push((id.clone(), read_patch(&args.patches, id)?));
    }
    let reports = evaluate_batch(&corpus, &items, args.jobs)?;
    let score = score_run(&reports)?;
    let format = match args.output.format {
        Format::Text => ReportFormat::Text,
        Format::Machine => ReportFormat::Machine,
    };
    let rendered = render_batch(&reports, format);
    match &args.output.out {
        Some(path) => write_output(path, &rendered)?,
        None => print!("{rendered}"),
    }
    for r in &reports {
        let note = r.patch_error.as_deref().map(|e| format!(" (patch rejected: {e})")).unwrap_or_default();
        println!(
            "{}: {} {}/{} coverage {:.3}{note}",
            r.task_id,
            if r.resolved { "resolved" } else { "unresolved" },
            r.outcomes.iter().filter(|o| o.passed()).count(),
            r.outcomes.len(),
            r.target_coverage
        );
    }
    println!("resolution_rate: {}", score.resolution_rate);
    println!("mean_subtask_rate: {}", score.mean_subtask_rate);
    println!("mean_target_coverage: {}", score.mean_target_coverage);
    Ok(if score.resolved == score.tasks { Done::Success } else { Done::Unresolved })
}

#[derive(Args)]
pub struct StatsArgs {
    pub manifest: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn stat_line(name: &str, a: &Aggregate) -> String {
    format!("{name:<24} mean {:>10.2}  max {:>6}\n", a.mean, a.max)
}

pub fn stats(args: StatsArgs) -> CmdResult {
    let corpus = load(&args.manifest)?;
    let s = corpus_stats(&corpus)?;
    match args.output.format {
        Format::Machine => {
            let Some(path) = &args.output.out else { return fail("--format machine needs --out") };
            let doc = serde_json::json!({ "schema_version": 1, "corpus": corpus.manifest.corpus, "stats": s });
            write_output(path, &(serde_json::to_string_pretty(&doc)? + "\n"))?;
            println!("wrote {}", path.display());
        }
        Format::Text => {
            let mut out = format!("{}: {} tasks across {} repositories\n", corpus.manifest.corpus, s.tasks, s.repos);
            out.push_str(&stat_line("lazy instruction words", &s.lazy_words));
            out.push_str(&stat_line("base instruction words", &s.base_words));
            out.push_str(&stat_line("descriptive words", &s.descriptive_words));
            out.push_str(&stat_line("repository files", &s.repo_files));
            out.push_str(&stat_line("repository lines", &s.repo_lines));
            out.push_str(&stat_line("assertions per suite", &s.suite_length));
            out.push_str(&stat_line("suite lines", &s.suite_lines));
            out.push_str(&stat_line("target files", &s.target_files));
            if let Some(r) = &s.reference_files_edited {
                out.push_str(&stat_line("files edited (reference)", r));
            }
            match &args.output.out {
                Some(path) => write_output(path, &out)?,
                None => print!("{out}"),
            }
        }
    }
    Ok(Done::Success)
}

#[derive(Args)]
pub struct PseudotaskArgs {
    pub manifest: PathBuf,
    /// Task ids, all from one repository.
    #[arg(required = true, num_args = 2..)]
    pub tasks: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn pseudotask(args: PseudotaskArgs) -> CmdResult {
    let corpus = load(&args.manifest)?;
    let ids: Vec<&str> = args.tasks.iter().map(String::as_str).collect();
    let p = compose_pseudotask(&corpus, &ids)?;
    write_output(&args.out, &(serde_json::to_string_pretty(&p)? + "\n"))?;
    println!(
        "{}: {} tasks, {} assertions -> {}",
        p.repo_id,
        p.task_ids.len(),
        p.suite.assertions.len(),
        args.out.display()
    );
    Ok(Done::Success)
}
