//! Agent loop over a simulated file-editing shell, with an optional state ledger.

mod env;
mod episode;
mod parse;
mod state;

use serde::{Deserialize, Serialize};

use crate::lmclient::{Message, Role, Usage};

pub use env::{EditTarget, RangeError, SimEnv, StepOutput, DEFAULT_OUTPUT_CAP, DEFAULT_WINDOW_LINES};
pub use episode::{run_episode, Episode, EpisodeConfig, HarnessError, InjectError, PolicyKind, ScheduledEdit};
pub use parse::{parse_command, parse_reply, split_words, FormatViolation, ParsedReply, SearchScope, ToolCommand};
pub use state::{
    plain_block, py_list, py_repr, render_edit, render_external, render_state_block, EditRecord, LedgerPolicy,
    StatePolicy, StateSummary,
};

pub const TRAJECTORY_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_OBSERVATION_WINDOW: usize = 5;

pub const SYSTEM_TEMPLATE: &str =
    "You are a software engineer refactoring a Python repository through a restricted terminal.
Files are viewed through an editor window of {window} lines.

Commands:
  open <path> [<line>]        show a file, optionally centred on a line
  goto <line>                 move the window of the open file
  scroll_down / scroll_up     move the window by one page
  search_file <term> [<file>] list matching lines in a file (default: the open file)
  search_dir <term> [<dir>]   count matches per file under a directory
  find_file <name> [<dir>]    list files whose name matches a glob
  create <path>               create an empty file and open it
  edit [<file>] <start>:<end> replace lines start..end with the text that follows,
                              terminated by a line reading end_of_edit
  submit                      finish and hand in the changes
Read-only shell commands are also available: ls, cd, pwd, cat, grep, find.

Each reply has two parts: a DISCUSSION paragraph, then exactly one command in a single ``` fenced block.
Wait for the output of each command before issuing the next one. Indentation inside edits is kept as written.
";

pub const INSTANCE_TEMPLATE: &str = "Task:
{instruction}

You are at the root of the repository. Change every file the task requires, then run submit.
Do not try to run the repository's tests.
";

/// One agent reply. `command` is `None` when the reply broke the response format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    pub index: usize,
    pub response: String,
    pub thought: String,
    pub raw: String,
    pub command: Option<ToolCommand>,
}

impl Action {
    pub fn from_response(index: usize, response: &str) -> (Action, Option<FormatViolation>) {
        match parse_reply(response) {
            Ok(p) => (
                Action { index, response: response.into(), thought: p.thought, raw: p.raw, command: Some(p.command) },
                None,
            ),
            Err(v) => (
                Action {
                    index,
                    response: response.into(),
                    thought: response.into(),
                    raw: String::new(),
                    command: None,
                },
                Some(v),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub index: usize,
    pub text: String,
    pub truncated: bool,
    pub edit: Option<EditTarget>,
    pub open_file: String,
    pub working_dir: String,
}

/// A concurrent user's change, reported to the agent in the next state block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalEdit {
    pub file: String,
    pub line_start: usize,
    pub line_end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub action: Action,
    pub observation: Observation,
    /// External edits drained into this step's state.
    pub external_events: Vec<ExternalEdit>,
    pub state: Option<StateSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Submitted,
    StepLimit,
    CostLimit,
    Aborted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub task_id: String,
    pub instruction: String,
    pub model: String,
    pub policy: PolicyKind,
    pub window: usize,
    pub window_lines: usize,
    pub initial_state: StateSummary,
    pub steps: Vec<Step>,
    pub status: Option<EpisodeStatus>,
    pub abort_reason: Option<String>,
    pub usage: Usage,
}

impl Trajectory {
    /// σ_0..σ_N when a policy is active.
    pub fn states(&self) -> Vec<StateSummary> {
        std::iter::once(self.initial_state.clone()).chain(self.steps.iter().filter_map(|s| s.state.clone())).collect()
    }

    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        format!("sha256:{}", hex::encode(Sha256::digest(export_trajectory(self).as_bytes())))
    }
}

fn observation_block(step: &Step) -> String {
    match &step.state {
        Some(s) => render_state_block(s),
        None => plain_block(&step.observation.open_file, &step.observation.working_dir),
    }
}

fn with_block(text: &str, block: &str) -> String {
    if text.is_empty() {
        block.to_string()
    } else {
        format!("{text}\n{block}")
    }
}

pub fn instance_message(traj: &Trajectory) -> String {
    let body = INSTANCE_TEMPLATE.replace("{instruction}", &traj.instruction);
    let block = match traj.policy {
        PolicyKind::Ledger => render_state_block(&traj.initial_state),
        PolicyKind::None => plain_block(&traj.initial_state.open_file, &traj.initial_state.working_dir),
    };
    format!("{body}\n{block}")
}

pub fn system_message(window_lines: usize) -> String {
    SYSTEM_TEMPLATE.replace("{window}", &window_lines.to_string())
}

/// The user message shown for a step, observation verbatim.
pub fn step_message(step: &Step) -> String {
    with_block(&step.observation.text, &observation_block(step))
}

pub fn elision_marker(step: &Step) -> String {
    format!("[output of step {} omitted: {} lines]", step.observation.index, step.observation.text.lines().count())
}

/// Messages for the next model call: every action kept, only the last `window` observations verbatim.
pub fn window_context(traj: &Trajectory, window: usize) -> Vec<Message> {
    let window = window.max(1);
    let n = traj.steps.len();
    let mut out = vec![
        Message::new(Role::System, system_message(traj.window_lines)),
        Message::new(Role::User, instance_message(traj)),
    ];
    for (i, step) in traj.steps.iter().enumerate() {
        out.push(Message::new(Role::Assistant, step.action.response.clone()));
        let shown = if i + window >= n { step.observation.text.clone() } else { elision_marker(step) };
        out.push(Message::new(Role::User, with_block(&shown, &observation_block(step))));
    }
    out
}

// ---- log documents ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "lowercase")]
enum Record {
    Assistant {
        index: usize,
        content: String,
        thought: String,
        action: String,
    },
    User {
        index: usize,
        content: String,
        observation: String,
        truncated: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        state: Option<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        external_events: Vec<ExternalEdit>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        edit: Option<EditTarget>,
        open_file: String,
        working_dir: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LogDocument {
    schema_version: u32,
    task_id: String,
    instruction: String,
    model: String,
    policy: PolicyKind,
    window: usize,
    window_lines: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    status: Option<EpisodeStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    abort_reason: Option<String>,
    usage: Usage,
    initial_state: String,
    history: Vec<Record>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ImportError {
    #[error("malformed trajectory log: {0}")]
    Malformed(String),
    #[error("unsupported trajectory schema_version {0}")]
    SchemaVersion(u32),
    #[error("record {0} breaks assistant/user alternation")]
    Alternation(usize),
}

/// Ordered assistant/user records; each user record carries the serialized state.
pub fn export_trajectory(traj: &Trajectory) -> String {
    let mut history = Vec::new();
    for step in &traj.steps {
        let a = &step.action;
        history.push(Record::Assistant {
            index: a.index,
            content: a.response.clone(),
            thought: a.thought.clone(),
            action: if a.command.is_some() { format!("{}\n", a.raw) } else { String::new() },
        });
        let o = &step.observation;
        history.push(Record::User {
            index: o.index,
            content: step_message(step),
            observation: o.text.clone(),
            truncated: o.truncated,
            state: step.state.as_ref().map(StateSummary::to_document),
            external_events: step.external_events.clone(),
            edit: o.edit.clone(),
            open_file: o.open_file.clone(),
            working_dir: o.working_dir.clone(),
        });
    }
    let doc = LogDocument {
        schema_version: TRAJECTORY_SCHEMA_VERSION,
        task_id: traj.task_id.clone(),
        instruction: traj.instruction.clone(),
        model: traj.model.clone(),
        policy: traj.policy,
        window: traj.window,
        window_lines: traj.window_lines,
        status: traj.status,
        abort_reason: traj.abort_reason.clone(),
        usage: traj.usage,
        initial_state: traj.initial_state.to_document(),
        history,
    };
    serde_json::to_string_pretty(&doc).expect("log serializes") + "\n"
}

/// Rebuilds a trajectory; commands are re-parsed from the stored replies.
pub fn import_trajectory(text: &str) -> Result<Trajectory, ImportError> {
    let bad = |e: serde_json::Error| ImportError::Malformed(e.to_string());
    let doc: LogDocument = serde_json::from_str(text).map_err(bad)?;
    if doc.schema_version != TRAJECTORY_SCHEMA_VERSION {
        return Err(ImportError::SchemaVersion(doc.schema_version));
    }
    let mut steps = Vec::new();
    let mut records = doc.history.into_iter().enumerate();
    while let Some((i, rec)) = records.next() {
        let Record::Assistant { index, content, .. } = rec else { return Err(ImportError::Alternation(i)) };
        let (action, _) = Action::from_response(index, &content);
        let Some((
            j,
            Record::User {
                index: oi,
                observation,
                truncated,
                state,
                external_events,
                edit,
                open_file,
                working_dir,
                ..
            },
        )) = records.next()
        else {
            return Err(ImportError::Alternation(i + 1));
        };
        if oi != index {
            return Err(ImportError::Alternation(j));
        }
        let state = state.map(|s| StateSummary::from_document(&s)).transpose().map_err(bad)?;
        steps.push(Step {
            action,
            observation: Observation { index: oi, text: observation, truncated, edit, open_file, working_dir },
            external_events,
            state,
        });
    }
    Ok(Trajectory {
        task_id: doc.task_id,
        instruction: doc.instruction,
        model: doc.model,
        policy: doc.policy,
        window: doc.window,
        window_lines: doc.window_lines,
        initial_state: StateSummary::from_document(&doc.initial_state).map_err(bad)?,
        steps,
        status: doc.status,
        abort_reason: doc.abort_reason,
        usage: doc.usage,
    })
}
