//! State summaries σ_n, the edit-ledger policy and the state block text.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ExternalEdit, Step};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditRecord {
    pub file: String,
    pub line_start: usize,
    pub line_end: usize,
    pub first_seen: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSummary {
    pub working_dir: String,
    pub open_file: String,
    pub recent_edits: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub external_edits: Vec<String>,
}

impl StateSummary {
    pub fn initial(working_dir: &str, open_file: &str) -> StateSummary {
        StateSummary { working_dir: working_dir.into(), open_file: open_file.into(), ..Default::default() }
    }

    /// Compact JSON with `", "` / `": "` separators, keys in fixed order.
    pub fn to_document(&self) -> String {
        let s = |v: &str| serde_json::to_string(v).expect("string serializes");
        let list = |xs: &[String]| format!("[{}]", xs.iter().map(|x| s(x)).collect::<Vec<_>>().join(", "));
        let mut out = format!(
            "{{\"working_dir\": {}, \"open_file\": {}, \"recent_edits\": {}",
            s(&self.working_dir),
            s(&self.open_file),
            list(&self.recent_edits)
        );
        if !self.external_edits.is_empty() {
            out.push_str(&format!(", \"external_edits\": {}", list(&self.external_edits)));
        }
        out.push('}');
        out
    }

    pub fn from_document(doc: &str) -> Result<StateSummary, serde_json::Error> {
        serde_json::from_str(doc)
    }
}

pub trait StatePolicy: Send + Sync {
    fn name(&self) -> &str;
    /// σ_N from the prefix τ_N (steps 1..=N), prior states σ_0..σ_{N-1}, and events queued since step N-1.
    fn update(&self, prefix: &[Step], prior: &[StateSummary], events: &[ExternalEdit]) -> StateSummary;
}

fn basename(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

pub fn render_edit(file: &str, a: usize, b: usize) -> String {
    format!("Edited {} at lines {a}:{b}", basename(file))
}

pub fn render_external(file: &str, a: usize, b: usize) -> String {
    format!("Since your previous action, another user edited {} at lines {a}:{b}", basename(file))
}

/// Tracks successful edit commands, first occurrence per (file, start, end).
#[derive(Debug, Clone, Copy, Default)]
pub struct LedgerPolicy;

impl LedgerPolicy {
    pub fn records(prefix: &[Step]) -> Vec<EditRecord> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for step in prefix {
            if let Some(e) = &step.observation.edit {
                if seen.insert((e.path.clone(), e.line_start, e.line_end)) {
                    out.push(EditRecord {
                        file: e.path.clone(),
                        line_start: e.line_start,
                        line_end: e.line_end,
                        first_seen: step.action.index,
                    });
                }
            }
        }
        out
    }
}

impl StatePolicy for LedgerPolicy {
    fn name(&self) -> &str {
        "ledger"
    }

    fn update(&self, prefix: &[Step], prior: &[StateSummary], events: &[ExternalEdit]) -> StateSummary {
        let (working_dir, open_file) = match prefix.last() {
            Some(s) => (s.observation.working_dir.clone(), s.observation.open_file.clone()),
            None => prior.last().map(|p| (p.working_dir.clone(), p.open_file.clone())).unwrap_or_default(),
        };
        StateSummary {
            working_dir,
            open_file,
            recent_edits: Self::records(prefix)
                .iter()
                .map(|r| render_edit(&r.file, r.line_start, r.line_end))
                .collect(),
            external_edits: events.iter().map(|e| render_external(&e.file, e.line_start, e.line_end)).collect(),
        }
    }
}

/// Python `repr` of a str.
pub fn py_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::from(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c if (c as u32) < 0x20 || c as u32 == 0x7f => out.push_str(&format!("\\x{:02x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

pub fn py_list(items: &[String]) -> String {
    format!("[{}]", items.iter().map(|s| py_repr(s)).collect::<Vec<_>>().join(", "))
}

/// Lines appended after each observation when a state policy is active.
pub fn render_state_block(state: &StateSummary) -> String {
    let mut out = String::new();
    if !state.external_edits.is_empty() {
        out.push_str(&format!("(External Edits: {})\n", py_list(&state.external_edits)));
    }
    out.push_str(&format!("(Current State: {})\n", py_list(&state.recent_edits)));
    out.push_str(&plain_block(&state.open_file, &state.working_dir));
    out
}

/// The block used without a state policy.
pub fn plain_block(open_file: &str, working_dir: &str) -> String {
    format!("(Open file: {open_file})\n(Current directory: {working_dir})\nbash-$")
}
