use serde::{Deserialize, Serialize};

use super::env::{RangeError, SimEnv, DEFAULT_OUTPUT_CAP, DEFAULT_WINDOW_LINES};
use super::state::{LedgerPolicy, StatePolicy, StateSummary};
use super::{
    window_context, Action, EpisodeStatus, ExternalEdit, Observation, Step, Trajectory, DEFAULT_OBSERVATION_WINDOW,
};
use crate::evaluator::{materialize_workspace, EvalError, Workspace};
use crate::lmclient::{ChatRequest, LmClient, Usage};
use crate::taskspec::Corpus;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    #[default]
    Ledger,
    None,
}

impl std::str::FromStr for PolicyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ledger" => Ok(PolicyKind::Ledger),
            "none" => Ok(PolicyKind::None),
            other => Err(format!("unknown state policy '{other}' (expected ledger or none)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub model: String,
    pub policy: PolicyKind,
    /// Observations shown verbatim to the model.
    pub window: usize,
    pub max_steps: usize,
    /// Total prompt + completion tokens allowed; no limit when absent.
    pub token_budget: Option<u64>,
    pub window_lines: usize,
    pub output_cap: usize,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            model: "offline".into(),
            policy: PolicyKind::Ledger,
            window: DEFAULT_OBSERVATION_WINDOW,
            max_steps: 60,
            token_budget: None,
            window_lines: DEFAULT_WINDOW_LINES,
            output_cap: DEFAULT_OUTPUT_CAP,
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InjectError {
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("no such file: {0}")]
    UnknownFile(String),
    #[error("invalid range {start}:{end} for {file} ({lines} lines)")]
    InvalidRange { file: String, start: usize, end: usize, lines: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Workspace(#[from] EvalError),
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("external edit after step {after_step}: {error}")]
    Inject { after_step: usize, error: InjectError },
}

/// An external edit applied once the given number of steps has completed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledEdit {
    pub after_step: usize,
    pub edit: ExternalEdit,
}

pub struct Episode<'a> {
    env: SimEnv,
    lm: &'a dyn LmClient,
    policy: Option<Box<dyn StatePolicy>>,
    config: EpisodeConfig,
    traj: Trajectory,
    pending: Vec<ExternalEdit>,
}

impl<'a> Episode<'a> {
    pub fn new(
        workspace: Workspace,
        repo_name: &str,
        instruction: &str,
        lm: &'a dyn LmClient,
        config: EpisodeConfig,
    ) -> Result<Episode<'a>, HarnessError> {
        let task_id = workspace.task_id.clone();
        let mut env = SimEnv::new(workspace, repo_name).map_err(|e| HarnessError::Io(e.to_string()))?;
        env.window_lines = config.window_lines.max(1);
        env.output_cap = config.output_cap.max(1);
        let policy: Option<Box<dyn StatePolicy>> = match config.policy {
            PolicyKind::Ledger => Some(Box::new(LedgerPolicy)),
            PolicyKind::None => None,
        };
        let traj = Trajectory {
            task_id,
            instruction: instruction.to_string(),
            model: config.model.clone(),
            policy: config.policy,
            window: config.window.max(1),
            window_lines: env.window_lines,
            initial_state: StateSummary::initial(&env.working_dir(), &env.open_file_display()),
            steps: Vec::new(),
            status: None,
            abort_reason: None,
            usage: Usage::default(),
        };
        Ok(Episode { env, lm, policy, config, traj, pending: Vec::new() })
    }

    /// Episode over a corpus task's verified snapshot.
    pub fn for_task(
        corpus: &Corpus,
        task_id: &str,
        instruction: &str,
        lm: &'a dyn LmClient,
        config: EpisodeConfig,
    ) -> Result<Episode<'a>, HarnessError> {
        let workspace = materialize_workspace(corpus, task_id)?;
        let repo = corpus.task(task_id).map(|t| t.repo_id.clone()).unwrap_or_default();
        Episode::new(workspace, &repo, instruction, lm, config)
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    pub fn env(&self) -> &SimEnv {
        &self.env
    }

    pub fn status(&self) -> Option<EpisodeStatus> {
        self.traj.status
    }

    /// Applies a concurrent user's edit now; the agent hears about it in the next state block.
    pub fn inject_external_edit(
        &mut self,
        file: &str,
        line_start: usize,
        line_end: usize,
        text: &str,
    ) -> Result<ExternalEdit, InjectError> {
        if self.traj.status.is_some() {
            return Err(InjectError::EpisodeFinished);
        }
        let mut replacement = text.to_string();
        if !replacement.is_empty() && !replacement.ends_with('\n') {
            replacement.push('\n');
        }
        let rel = self.env.apply_external_edit(file, line_start, line_end, &replacement).map_err(|e| match e {
            RangeError::NoSuchFile(f) => InjectError::UnknownFile(f),
            RangeError::InvalidRange { file, start, end, lines } => {
                InjectError::InvalidRange { file, start, end, lines }
            }
        })?;
        let event = ExternalEdit { file: rel, line_start, line_end, text: replacement };
        self.pending.push(event.clone());
        Ok(event)
    }

    fn finish(&mut self, status: EpisodeStatus) -> Option<EpisodeStatus> {
        self.traj.status = Some(status);
        Some(status)
    }

    /// One model call and one environment step. Returns the terminal status once the episode ends.
    pub fn step(&mut self) -> Option<EpisodeStatus> {
        if self.traj.status.is_some() {
            return self.traj.status;
        }
        if self.traj.steps.len() >= self.config.max_steps {
            return self.finish(EpisodeStatus::StepLimit);
        }
        if self.config.token_budget.is_some_and(|b| self.traj.usage.total() >= b) {
            return self.finish(EpisodeStatus::CostLimit);
        }
        let mut request = ChatRequest::new(self.config.model.clone(), window_context(&self.traj, self.traj.window));
        request.temperature = self.config.temperature;
        request.max_tokens = self.config.max_tokens;
        let reply = match self.lm.complete(&request) {
            Ok(r) => r,
            Err(e) => {
                self.traj.abort_reason = Some(e.to_string());
                return self.finish(EpisodeStatus::Aborted);
            }
        };
        self.traj.usage += reply.usage;
        let index = self.traj.steps.len() + 1;
        let (action, violation) = Action::from_response(index, &reply.text);
        let (text, truncated, edit, submitted) = match (&action.command, violation) {
            (Some(cmd), _) => {
                let out = self.env.step(cmd);
                (out.text, out.truncated, out.edit, out.submitted)
            }
            (None, Some(v)) => (v.corrective_message(), false, None, false),
            (None, None) => unreachable!("a reply either parses or violates the format"),
        };
        let observation = Observation {
            index,
            text,
            truncated,
            edit,
            open_file: self.env.open_file_display(),
            working_dir: self.env.working_dir(),
        };
        let events = std::mem::take(&mut self.pending);
        self.traj.steps.push(Step { action, observation, external_events: events.clone(), state: None });
        if let Some(policy) = &self.policy {
            let prior = self.traj.states();
            let state = policy.update(&self.traj.steps, &prior, &events);
            self.traj.steps.last_mut().expect("just pushed").state = Some(state);
        }
        if submitted {
            return self.finish(EpisodeStatus::Submitted);
        }
        if self.traj.steps.len() >= self.config.max_steps {
            return self.finish(EpisodeStatus::StepLimit);
        }
        None
    }

    pub fn run(&mut self) -> EpisodeStatus {
        loop {
            if let Some(s) = self.step() {
                return s;
            }
        }
    }

    /// Unified diff of the workspace against its snapshot.
    pub fn patch_text(&self) -> String {
        self.env.patch_text()
    }

    pub fn into_parts(self) -> (Trajectory, String) {
        let patch = self.env.patch_text();
        (self.traj, patch)
    }
}

/// Runs to completion, applying scheduled external edits between steps.
pub fn run_episode(mut episode: Episode<'_>, schedule: &[ScheduledEdit]) -> Result<(Trajectory, String), HarnessError> {
    let mut schedule: Vec<&ScheduledEdit> = schedule.iter().collect();
    schedule.sort_by_key(|s| s.after_step);
    let mut next = 0;
    loop {
        let done = episode.trajectory().steps.len();
        while next < schedule.len() && schedule[next].after_step <= done && episode.status().is_none() {
            let s = schedule[next];
            episode
                .inject_external_edit(&s.edit.file, s.edit.line_start, s.edit.line_end, &s.edit.text)
                .map_err(|error| HarnessError::Inject { after_step: s.after_step, error })?;
            next += 1;
        }
        if episode.step().is_some() {
            break;
        }
    }
    Ok(episode.into_parts())
}
