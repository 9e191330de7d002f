use std::path::PathBuf;

use clap::Args;
use refkit::stategym::{
    export_runs, generate_runs, import_runs, score, trend, GenerateConfig, ScoreConfig, SyntheticRun,
};

use crate::lm::{self, Backend, LmArgs};
use crate::{fail, write_output, CmdResult, Done, UsageError};

#[derive(Args)]
pub struct GymArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Distinct initial states.
    #[arg(long, default_value_t = 50)]
    pub initial: usize,
    /// Action lists per initial state.
    #[arg(long, default_value_t = 5)]
    pub per_state: usize,
    #[arg(long, default_value_t = 50)]
    pub actions: usize,
    /// Score runs from this file instead of generating them.
    #[arg(long, conflicts_with_all = ["seed", "initial", "per_state", "actions"])]
    pub runs: Option<PathBuf>,
    /// Write the runs to this file.
    #[arg(long)]
    pub export: Option<PathBuf>,
    /// Prefix lengths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,10,20,30,40,50")]
    pub grid: Vec<usize>,
    #[arg(long, default_value = "offline")]
    pub model: String,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Accuracy table document.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub lm: LmArgs,
}

fn load_runs(args: &GymArgs) -> Result<(Vec<SyntheticRun>, u64), UsageError> {
    match &args.runs {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            let runs = import_runs(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            let seed = runs.first().map_or(0, |r| r.seed);
            Ok((runs, seed))
        }
        None => {
            let config = GenerateConfig { n_initial: args.initial, per_state: args.per_state, n_actions: args.actions };
            Ok((generate_runs(args.seed, config), args.seed))
        }
    }
}

pub fn run(args: GymArgs) -> CmdResult {
    let (runs, seed) = load_runs(&args)?;
    if let Some(path) = &args.export {
        write_output(path, &export_runs(&runs, seed))?;
        println!("wrote {} runs to {}", runs.len(), path.display());
    }
    if args.lm.lm.is_none() && args.export.is_some() {
        return Ok(Done::Success);
    }
    let lm =
        lm::build(&args.lm, None, &[Backend::Remote, Backend::Replay, Backend::Oracle, Backend::Echo, Backend::Lossy])?;
    if args.grid.is_empty() {
        return fail("empty --grid");
    }
    let config = ScoreConfig { model: args.model.clone(), grid: args.grid.clone(), jobs: args.jobs };
    let table = score(&runs, lm.as_ref(), &config)?;
    println!(
        "{:>4}  {:>5}  {:>11}  {:>9}  {:>11}  {:>8}",
        "n", "runs", "exact_match", "per_entry", "unparseable", "failures"
    );
    for r in &table.rows {
        println!(
            "{:>4}  {:>5}  {:>11.4}  {:>9.4}  {:>11}  {:>8}",
            r.n, r.runs, r.exact_match_rate, r.per_entry_rate, r.unparseable, r.lm_failures
        );
    }
    let slope = trend(&table).ok();
    match slope {
        Some(t) => println!("trend: slope {:.6} per action, rank correlation {:.4}", t.slope, t.rank_correlation),
        None => println!("trend: fewer than 3 grid points"),
    }
    if let Some(path) = &args.out {
        let doc = serde_json::json!({ "schema_version": 1, "seed": seed, "table": table, "trend": slope });
        write_output(path, &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    }
    for f in table.failures.iter().take(5) {
        eprintln!("run {} at n={}: {}", f.run, f.n, f.error);
    }
    Ok(if table.failures.is_empty() { Done::Success } else { Done::Unresolved })
}
