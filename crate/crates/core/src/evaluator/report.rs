//! Text and machine renderings of evaluation reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{score_run, EvaluationReport, RunScore};
use crate::assertlang::{AssertionOutcome, Expectation, Status};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Text,
    Machine,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "machine" | "json" => Ok(ReportFormat::Machine),
            other => Err(format!("unknown report format '{other}'")),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MachineReport {
    schema_version: u32,
    report: EvaluationReport,
}

#[derive(Serialize, Deserialize)]
struct MachineBatch {
    schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<RunScore>,
    reports: Vec<EvaluationReport>,
}

const WIDE: usize = 80;
const NARROW: usize = 70;

/// Text rendering is a batch document holding one suite section.
pub fn render_report(report: &EvaluationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => render_batch(std::slice::from_ref(report), ReportFormat::Text),
        ReportFormat::Machine => {
            let doc = MachineReport { schema_version: REPORT_SCHEMA_VERSION, report: report.clone() };
            serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
        }
    }
}

pub fn render_batch(reports: &[EvaluationReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Machine => {
            let doc = MachineBatch {
                schema_version: REPORT_SCHEMA_VERSION,
                score: score_run(reports).ok(),
                reports: reports.to_vec(),
            };
            serde_json::to_string_pretty(&doc).expect("batch serializes") + "\n"
        }
        ReportFormat::Text => {
            let mut out = String::from("    Patch Evaluation Results\n");
            out.push_str(&"=".repeat(WIDE));
            out.push('\n');
            for r in reports {
                suite_section(&mut out, r);
                out.push_str(&"=".repeat(WIDE));
                out.push('\n');
            }
            out
        }
    }
}

/// Inverse of the machine rendering of a single report.
pub fn parse_machine_report(doc: &str) -> Result<EvaluationReport, String> {
    let parsed: MachineReport = serde_json::from_str(doc).map_err(|e| e.to_string())?;
    if parsed.schema_version != REPORT_SCHEMA_VERSION {
        return Err(format!("unsupported report schema_version {}", parsed.schema_version));
    }
    Ok(parsed.report)
}

fn class_name(label: &str) -> String {
    let mut name = String::from("Test");
    for part in label.split(|c: char| !c.is_ascii_alphanumeric()).filter(|p| !p.is_empty()) {
        let mut chars = part.chars();
        if let Some(first) = chars.next() {
            name.push(first.to_ascii_uppercase());
            name.extend(chars);
        }
    }
    name
}

fn suite_section(out: &mut String, r: &EvaluationReport) {
    let _ = writeln!(out, "Test file: {}", r.suite_file);
    if r.resolved {
        out.push_str("Test results: Passed\n");
        return;
    }
    let qualified = |id: &str| format!("{id} ({}.{}.{id})", r.suite_label, class_name(&r.suite_label));
    // unittest runs methods in name order
    let mut order: Vec<usize> = (0..r.outcomes.len()).collect();
    order.sort_by(|a, b| r.outcomes[*a].id.cmp(&r.outcomes[*b].id));
    for (n, &i) in order.iter().enumerate() {
        let o = &r.outcomes[i];
        let verdict = match o.status {
            Status::Pass => "ok",
            Status::Fail => "FAIL",
            Status::Error => "ERROR",
        };
        let prefix = if n == 0 { "Error: " } else { "" };
        let _ = writeln!(out, "{prefix}{} ... {verdict}", qualified(&o.id));
    }
    out.push('\n');
    for &i in &order {
        let o = &r.outcomes[i];
        if o.passed() {
            continue;
        }
        let head = if o.status == Status::Fail { "FAIL" } else { "ERROR" };
        out.push_str(&"=".repeat(NARROW));
        out.push('\n');
        let _ = writeln!(out, "{head}: {}", qualified(&o.id));
        out.push_str(&"-".repeat(NARROW));
        out.push('\n');
        out.push_str("Traceback (most recent call last):\n");
        let _ = writeln!(out, "  File \"{}\", line {}, in {}", r.suite_file, i + 1, o.id);
        let _ = writeln!(out, "    {}", call_line(o));
        let _ = writeln!(out, "{}", error_line(o));
    }
    out.push('\n');
    out.push_str(&"-".repeat(NARROW));
    out.push('\n');
    let seconds = r.timings.suite_seconds;
    let _ = writeln!(out, "Ran {} tests in {seconds:.3}s", r.outcomes.len());
    let (f, e) = (r.failures(), r.errors());
    match (f, e) {
        (0, 0) => out.push_str("OK\n"),
        (f, 0) => {
            let _ = writeln!(out, "FAILED (failures={f})");
        }
        (0, e) => {
            let _ = writeln!(out, "FAILED (errors={e})");
        }
        (f, e) => {
            let _ = writeln!(out, "FAILED (failures={f}, errors={e})");
        }
    }
    out.push('\n');
}

fn call_line(o: &AssertionOutcome) -> String {
    if o.status == Status::Error {
        return "self.run_check()".to_string();
    }
    match o.expectation {
        Expectation::IsTrue => format!("self.assertTrue(found, {:?})", o.message),
        Expectation::IsFalse => format!("self.assertFalse(found, {:?})", o.message),
        Expectation::IsNotNone => format!("self.assertIsNotNone(node, {:?})", o.message),
    }
}

fn error_line(o: &AssertionOutcome) -> String {
    if o.status == Status::Error {
        return format!("Exception: {}", o.message);
    }
    match o.expectation {
        Expectation::IsTrue => format!("AssertionError: False is not true : {}", o.message),
        Expectation::IsFalse => format!("AssertionError: True is not false : {}", o.message),
        Expectation::IsNotNone => format!("AssertionError: unexpectedly None : {}", o.message),
    }
}
