mod agent;
mod corpus;
mod gym;
mod lm;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "refkit",
    version,
    about = "Refactoring benchmark toolkit: corpus checks, patch evaluation, agent episodes, state-tracking gym"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a corpus manifest and every suite it references.
    Validate { manifest: PathBuf },
    /// Score candidate patches (one `<task-id>.diff` per task; a missing file counts as an empty patch).
    Eval(corpus::EvalArgs),
    /// Corpus size and instruction-length aggregates.
    Stats(corpus::StatsArgs),
    /// Combine several same-repository tasks into one.
    Pseudotask(corpus::PseudotaskArgs),
    /// Run one agent episode on a corpus task.
    Agent(agent::AgentArgs),
    /// Generate preference-tracking runs and score a model on them.
    Stategym(gym::GymArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Machine,
}

#[derive(Args, Clone)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Destination file; required for machine output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Outcome of a command that ran to completion.
pub enum Done {
    Success,
    Unresolved,
}

/// Usage or configuration problem.
#[derive(Debug)]
pub struct UsageError(pub String);

impl<E: std::fmt::Display> From<E> for UsageError {
    fn from(e: E) -> Self {
        UsageError(e.to_string())
    }
}

pub type CmdResult = Result<Done, UsageError>;

pub fn fail<T>(msg: impl Into<String>) -> Result<T, UsageError> {
    Err(UsageError(msg.into()))
}

/// Writes `text` atomically next to its destination.
pub fn write_output(path: &std::path::Path, text: &str) -> Result<(), UsageError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(std::path::Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| UsageError(format!("{}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| UsageError(format!("{}: {e}", dir.display())))?;
    std::io::Write::write_all(&mut tmp, text.as_bytes()).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
    tmp.persist(path).map_err(|e| UsageError(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { manifest } => corpus::validate(&manifest),
        Command::Eval(a) => corpus::eval(a),
        Command::Stats(a) => corpus::stats(a),
        Command::Pseudotask(a) => corpus::pseudotask(a),
        Command::Agent(a) => agent::run(a),
        Command::Stategym(a) => gym::run(a),
    };
    match result {
        Ok(Done::Success) => ExitCode::SUCCESS,
        Ok(Done::Unresolved) => ExitCode::from(1),
        Err(UsageError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
