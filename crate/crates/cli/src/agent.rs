use std::path::PathBuf;

use clap::{Args, ValueEnum};
use refkit::harness::{export_trajectory, run_episode, Episode, EpisodeConfig, EpisodeStatus, PolicyKind};
use refkit::lmclient::RemoteConfig;
use serde::Deserialize;

use crate::lm::{self, Backend, LmArgs};
use crate::{corpus, fail, write_output, CmdResult, Done, UsageError};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Instruction {
    Lazy,
    Base,
    Descriptive,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Policy {
    Ledger,
    None,
}

#[derive(Args)]
pub struct AgentArgs {
    pub manifest: PathBuf,
    pub task_id: String,
    /// TOML with optional `[episode]` and `[remote]` tables; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub policy: Option<Policy>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub token_budget: Option<u64>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_enum, default_value = "base")]
    pub instruction: Instruction,
    /// Directory receiving trajectory.json and patch.diff.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub lm: LmArgs,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    episode: EpisodeConfig,
    remote: Option<RemoteConfig>,
}

fn read_config(path: Option<&PathBuf>) -> Result<ConfigFile, UsageError> {
    let Some(path) = path else { return Ok(ConfigFile::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))
}

pub fn run(args: AgentArgs) -> CmdResult {
    let file = read_config(args.config.as_ref())?;
    let mut config = file.episode;
    if let Some(p) = args.policy {
        config.policy = match p {
            Policy::Ledger => PolicyKind::Ledger,
            Policy::None => PolicyKind::None,
        };
    }
    if let Some(w) = args.window {
        config.window = w;
    }
    if let Some(n) = args.max_steps {
        config.max_steps = n;
    }
    if let Some(b) = args.token_budget {
        config.token_budget = Some(b);
    }
    if let Some(m) = &args.model {
        config.model = m.clone();
    }
    if config.window == 0 || config.max_steps == 0 {
        return fail("window and max_steps must be positive");
    }
    let corpus = corpus::load(&args.manifest)?;
    let Some(task) = corpus.task(&args.task_id) else { return fail(format!("unknown task '{}'", args.task_id)) };
    let instruction = match args.instruction {
        Instruction::Lazy => &task.instructions.lazy,
        Instruction::Base => &task.instructions.base,
        Instruction::Descriptive => &task.instructions.descriptive,
    }
    .clone();
    let client = lm::build(&args.lm, file.remote, &[Backend::Remote, Backend::Replay, Backend::Scripted])?;
    let episode = Episode::for_task(&corpus, &args.task_id, &instruction, client.as_ref(), config)?;
    let (trajectory, patch) = run_episode(episode, &[])?;

    write_output(&args.out.join("trajectory.json"), &export_trajectory(&trajectory))?;
    write_output(&args.out.join("patch.diff"), &patch)?;
    let status = trajectory.status.unwrap_or(EpisodeStatus::Aborted);
    let reason = trajectory.abort_reason.as_deref().map(|r| format!(" ({r})")).unwrap_or_default();
    println!("{}: {:?} after {} steps{reason}", args.task_id, status, trajectory.steps.len());
    println!("tokens: {}", trajectory.usage.total());
    println!("trajectory: {}", args.out.join("trajectory.json").display());
    println!("patch: {}", args.out.join("patch.diff").display());
    Ok(if status == EpisodeStatus::Submitted { Done::Success } else { Done::Unresolved })
}
