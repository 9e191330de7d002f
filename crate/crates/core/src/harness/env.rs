//! Deterministic simulation of the file-editor shell over a workspace.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::parse::{split_words, SearchScope, ToolCommand};
use crate::evaluator::patch::diff_trees;
use crate::evaluator::Workspace;
use crate::taskspec::snapshot::FileTree;

pub const DEFAULT_WINDOW_LINES: usize = 100;
pub const DEFAULT_OUTPUT_CAP: usize = 20_000;
const MAX_LISTED_FILES: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditTarget {
    pub path: String,
    pub line_start: usize,
    pub line_end: usize,
}

/// What one command produced, plus the environment position afterwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutput {
    pub text: String,
    pub truncated: bool,
    pub edit: Option<EditTarget>,
    pub submitted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RangeError {
    #[error("no such file: {0}")]
    NoSuchFile(String),
    #[error("lines {start}:{end} are outside {file} ({lines} lines)")]
    InvalidRange { file: String, start: usize, end: usize, lines: usize },
}

pub struct SimEnv {
    workspace: Workspace,
    repo_name: String,
    snapshot: FileTree,
    files: FileTree,
    cwd: String,
    open_file: Option<String>,
    top: usize,
    pub window_lines: usize,
    pub output_cap: usize,
}

fn line_spans(bytes: &[u8]) -> Vec<&[u8]> {
    bytes.split_inclusive(|b| *b == b'\n').collect()
}

fn glob_match(pattern: &str, name: &str) -> bool {
    fn go(p: &[char], s: &[char]) -> bool {
        match p.split_first() {
            None => s.is_empty(),
            Some(('*', rest)) => (0..=s.len()).any(|i| go(rest, &s[i..])),
            Some(('?', rest)) => !s.is_empty() && go(rest, &s[1..]),
            Some((c, rest)) => s.first() == Some(c) && go(rest, &s[1..]),
        }
    }
    let (p, s): (Vec<char>, Vec<char>) = (pattern.chars().collect(), name.chars().collect());
    go(&p, &s)
}

fn within(dir: &str, path: &str) -> bool {
    dir.is_empty() || path.strip_prefix(dir).is_some_and(|r| r.starts_with('/'))
}

impl SimEnv {
    pub fn new(workspace: Workspace, repo_name: &str) -> std::io::Result<SimEnv> {
        let files = workspace.files()?;
        Ok(SimEnv {
            workspace,
            repo_name: repo_name.to_string(),
            snapshot: files.clone(),
            files,
            cwd: String::new(),
            open_file: None,
            top: 1,
            window_lines: DEFAULT_WINDOW_LINES,
            output_cap: DEFAULT_OUTPUT_CAP,
        })
    }

    pub fn files(&self) -> &FileTree {
        &self.files
    }

    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    /// Unified diff of the current tree against the starting snapshot.
    pub fn patch_text(&self) -> String {
        diff_trees(&self.snapshot, &self.files).to_text()
    }

    pub fn working_dir(&self) -> String {
        if self.cwd.is_empty() {
            self.repo_name.clone()
        } else {
            format!("{}/{}", self.repo_name, self.cwd)
        }
    }

    pub fn open_file_display(&self) -> String {
        self.open_file.as_ref().map_or_else(|| "n/a".to_string(), |f| self.display(f))
    }

    fn display(&self, rel: &str) -> String {
        if rel.is_empty() {
            format!("/{}", self.repo_name)
        } else {
            format!("/{}/{rel}", self.repo_name)
        }
    }

    /// Resolve a user path against the working directory into a repo-relative path.
    fn resolve(&self, path: &str) -> Result<String, String> {
        let root = format!("/{}", self.repo_name);
        let (base, rest) = if path == root {
            (Vec::new(), "")
        } else if let Some(r) = path.strip_prefix(&format!("{root}/")) {
            (Vec::new(), r)
        } else if path.starts_with('/') {
            return Err(format!("{path} is outside the repository"));
        } else {
            (self.cwd.split('/').filter(|s| !s.is_empty()).collect::<Vec<_>>(), path)
        };
        let mut parts = base;
        for seg in rest.split('/') {
            match seg {
                "" | "." => {}
                ".." => {
                    if parts.pop().is_none() {
                        return Err(format!("{path} is outside the repository"));
                    }
                }
                s => parts.push(s),
            }
        }
        Ok(parts.join("/"))
    }

    fn is_dir(&self, rel: &str) -> bool {
        rel.is_empty() || self.files.keys().any(|k| within(rel, k) && k != rel)
    }

    fn write(&mut self, rel: &str, bytes: Vec<u8>) -> std::io::Result<()> {
        let full = self.workspace.root().join(rel);
        if let Some(parent) = full.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&full, &bytes)?;
        self.files.insert(rel.to_string(), bytes);
        self.workspace.dirty = true;
        Ok(())
    }

    fn line_count(&self, rel: &str) -> usize {
        self.files.get(rel).map_or(0, |b| line_spans(b).len())
    }

    fn render_window(&self) -> String {
        let Some(rel) = &self.open_file else { return "No file open. Use the open command first.".into() };
        let bytes = &self.files[rel];
        let lines = line_spans(bytes);
        let n = lines.len();
        let start = self.top.clamp(1, n.max(1));
        let end = (start + self.window_lines - 1).min(n);
        let mut out = format!("[File: {} ({n} lines total)]\n", self.display(rel));
        out.push_str(&format!("({} more lines above)\n", start - 1));
        for (i, l) in lines.iter().enumerate().take(end).skip(start - 1) {
            let text = String::from_utf8_lossy(l);
            out.push_str(&format!("{}:{}\n", i + 1, text.strip_suffix('\n').unwrap_or(&text)));
        }
        out.push_str(&format!("({} more lines below)", n.saturating_sub(end)));
        out
    }

    fn center_on(&mut self, line: usize) {
        self.top = line.saturating_sub(self.window_lines / 2).max(1);
    }

    /// Replace lines `a..=b` of `rel`. `a == b == n + 1` appends.
    fn replace_lines(&mut self, rel: &str, a: usize, b: usize, replacement: &str) -> Result<(), RangeError> {
        let bytes = self.files.get(rel).ok_or_else(|| RangeError::NoSuchFile(rel.to_string()))?;
        let lines = line_spans(bytes);
        let n = lines.len();
        let append = a == n + 1 && b == a;
        if a < 1 || a > b || (b > n && !append) {
            return Err(RangeError::InvalidRange { file: rel.to_string(), start: a, end: b, lines: n });
        }
        let mut out: Vec<u8> = lines[..a - 1].concat();
        if append && out.last().is_some_and(|c| *c != b'\n') {
            out.push(b'\n');
        }
        out.extend_from_slice(replacement.as_bytes());
        out.extend(lines[b.min(n)..].concat());
        self.write(rel, out).map_err(|_| RangeError::NoSuchFile(rel.to_string()))
    }

    /// A concurrent user's edit: applied now, without moving the agent's view.
    pub fn apply_external_edit(
        &mut self,
        path: &str,
        a: usize,
        b: usize,
        replacement: &str,
    ) -> Result<String, RangeError> {
        let rooted = if path.starts_with('/') { path.to_string() } else { format!("/{}/{path}", self.repo_name) };
        let rel = self.resolve(&rooted).map_err(|_| RangeError::NoSuchFile(path.to_string()))?;
        if !self.files.contains_key(&rel) {
            return Err(RangeError::NoSuchFile(path.to_string()));
        }
        self.replace_lines(&rel, a, b, replacement)?;
        Ok(rel)
    }

    fn cap(&self, text: String) -> (String, bool) {
        if text.chars().count() <= self.output_cap {
            return (text, false);
        }
        let cut: String = text.chars().take(self.output_cap).collect();
        let dropped = text.chars().count() - self.output_cap;
        (format!("{cut}\n<output truncated: {dropped} more characters>"), true)
    }

    pub fn step(&mut self, command: &ToolCommand) -> StepOutput {
        let mut edit = None;
        let mut submitted = false;
        let text = match command {
            ToolCommand::Open { path, line } => self.open(path, *line),
            ToolCommand::Goto { line } => match &self.open_file {
                None => "Error: no file open. Use the open command first.".into(),
                Some(rel) => {
                    let n = self.line_count(rel);
                    if *line > n {
                        format!("Error: <line> must be less than or equal to {n}")
                    } else {
                        self.center_on(*line);
                        self.render_window()
                    }
                }
            },
            ToolCommand::ScrollDown | ToolCommand::ScrollUp => match &self.open_file {
                None => "Error: no file open. Use the open command first.".into(),
                Some(rel) => {
                    let n = self.line_count(rel);
                    let last_top = n.saturating_sub(self.window_lines).saturating_add(1).max(1);
                    self.top = if matches!(command, ToolCommand::ScrollDown) {
                        (self.top + self.window_lines).min(last_top)
                    } else {
                        self.top.saturating_sub(self.window_lines).max(1)
                    };
                    self.render_window()
                }
            },
            ToolCommand::Search { scope, term, target } => self.search(*scope, term, target.as_deref()),
            ToolCommand::Create { path } => match self.resolve(path) {
                Err(e) => format!("Error: {e}"),
                Ok(rel) if rel.is_empty() || self.files.contains_key(&rel) || self.is_dir(&rel) => {
                    format!("Error: File '{path}' already exists.")
                }
                Ok(rel) => match self.write(&rel, Vec::new()) {
                    Err(e) => format!("Error: {e}"),
                    Ok(()) => {
                        self.open_file = Some(rel);
                        self.top = 1;
                        self.render_window()
                    }
                },
            },
            ToolCommand::Edit { file, line_start, line_end, replacement } => {
                let target = match file {
                    Some(f) => self.resolve(f).and_then(|rel| {
                        if self.files.contains_key(&rel) {
                            Ok(rel)
                        } else {
                            Err(format!("File {f} not found"))
                        }
                    }),
                    None => {
                        self.open_file.clone().ok_or_else(|| "no file open. Use the open command first.".to_string())
                    }
                };
                match target {
                    Err(e) => format!("Error: {e}"),
                    Ok(rel) => match self.replace_lines(&rel, *line_start, *line_end, replacement) {
                        Err(e) => format!("Error: {e}"),
                        Ok(()) => {
                            self.open_file = Some(rel.clone());
                            self.center_on(*line_start);
                            edit = Some(EditTarget { path: rel, line_start: *line_start, line_end: *line_end });
                            format!(
                                "{}\nFile updated. Review the lines above and edit again if needed.",
                                self.render_window()
                            )
                        }
                    },
                }
            }
            ToolCommand::Submit => {
                submitted = true;
                let diff = self.patch_text();
                if diff.is_empty() {
                    "Submitted with no changes.".into()
                } else {
                    diff
                }
            }
            ToolCommand::Shell { raw } => self.shell(raw),
        };
        let (text, truncated) = self.cap(text);
        StepOutput { text, truncated, edit, submitted }
    }

    fn open(&mut self, path: &str, line: Option<usize>) -> String {
        let rel = match self.resolve(path) {
            Ok(r) => r,
            Err(e) => return format!("Error: {e}"),
        };
        if !self.files.contains_key(&rel) {
            return if self.is_dir(&rel) {
                format!("Error: {path} is a directory. You can only open files.")
            } else {
                format!("File {path} not found")
            };
        }
        let n = self.line_count(&rel);
        if let Some(l) = line {
            if l > n {
                return format!("Error: <line> must be less than or equal to {n}");
            }
        }
        self.open_file = Some(rel);
        match line {
            Some(l) => self.center_on(l),
            None => self.top = 1,
        }
        self.render_window()
    }

    fn search(&self, scope: SearchScope, term: &str, target: Option<&str>) -> String {
        match scope {
            SearchScope::File => {
                let rel = match target {
                    Some(t) => match self.resolve(t) {
                        Ok(r) if self.files.contains_key(&r) => r,
                        _ => return format!("Error: File name {t} not found. Please provide a valid file name."),
                    },
                    None => match &self.open_file {
                        Some(r) => r.clone(),
                        None => return "No file open. Use the open command first.".into(),
                    },
                };
                let text = String::from_utf8_lossy(&self.files[&rel]).into_owned();
                let hits: Vec<String> = text
                    .lines()
                    .enumerate()
                    .filter(|(_, l)| l.contains(term))
                    .map(|(i, l)| format!("Line {}:{l}", i + 1))
                    .collect();
                let shown = self.display(&rel);
                if hits.is_empty() {
                    return format!("No matches found for \"{term}\" in {shown}");
                }
                format!(
                    "Found {} matches for \"{term}\" in {shown}:\n{}\nEnd of matches for \"{term}\" in {shown}",
                    hits.len(),
                    hits.join("\n")
                )
            }
            SearchScope::Dir | SearchScope::FindFile => {
                let dir = match self.resolve(target.unwrap_or(".")) {
                    Ok(d) if self.is_dir(&d) => d,
                    _ => return format!("Directory {} not found", target.unwrap_or(".")),
                };
                let shown = self.display(&dir);
                let in_dir = self.files.iter().filter(|(k, _)| within(&dir, k));
                if scope == SearchScope::FindFile {
                    let found: Vec<String> = in_dir
                        .filter(|(k, _)| glob_match(term, k.rsplit('/').next().unwrap_or(k)))
                        .map(|(k, _)| self.display(k))
                        .collect();
                    if found.is_empty() {
                        return format!("No matches found for \"{term}\" in {shown}");
                    }
                    return format!("Found {} matches for \"{term}\" in {shown}:\n{}", found.len(), found.join("\n"));
                }
                let counts: Vec<(String, usize)> = in_dir
                    .map(|(k, v)| (k.clone(), String::from_utf8_lossy(v).matches(term).count()))
                    .filter(|(_, c)| *c > 0)
                    .collect();
                if counts.is_empty() {
                    return format!("No matches found for \"{term}\" in {shown}");
                }
                if counts.len() > MAX_LISTED_FILES {
                    return format!(
                        "More than {MAX_LISTED_FILES} files matched for \"{term}\" in {shown}. Please narrow your search."
                    );
                }
                let total: usize = counts.iter().map(|c| c.1).sum();
                let listing: Vec<String> =
                    counts.iter().map(|(k, c)| format!("{} ({c} matches)", self.display(k))).collect();
                format!(
                    "Found {total} matches for \"{term}\" in {shown}:\n{}\nEnd of matches for \"{term}\" in {shown}",
                    listing.join("\n")
                )
            }
        }
    }

    /// Read-only whitelist: ls, cd, pwd, cat, grep, find.
    fn shell(&mut self, raw: &str) -> String {
        let words = match split_words(raw) {
            Ok(w) if !w.is_empty() => w,
            _ => return format!("bash: cannot parse: {raw}"),
        };
        let (flags, args): (Vec<&String>, Vec<&String>) =
            words[1..].iter().partition(|w| w.starts_with('-') && w.len() > 1);
        let out = match words[0].as_str() {
            "pwd" => self.display(&self.cwd),
            "cd" => {
                let target = args.first().map_or("/".to_string() + &self.repo_name, |s| s.to_string());
                match self.resolve(&target) {
                    Ok(d) if self.is_dir(&d) => {
                        self.cwd = d;
                        String::new()
                    }
                    _ => format!("bash: cd: {target}: No such file or directory"),
                }
            }
            "ls" => {
                let classify = flags.iter().any(|f| f.contains('F'));
                let path = args.first().map_or(".", |s| s.as_str());
                match self.resolve(path) {
                    Ok(rel) if self.files.contains_key(&rel) => path.to_string(),
                    Ok(rel) if self.is_dir(&rel) => {
                        let mut entries = BTreeSet::new();
                        for k in self.files.keys().filter(|k| within(&rel, k)) {
                            let rest = if rel.is_empty() { k.as_str() } else { &k[rel.len() + 1..] };
                            match rest.split_once('/') {
                                Some((d, _)) => entries.insert(if classify { format!("{d}/") } else { d.to_string() }),
                                None => entries.insert(rest.to_string()),
                            };
                        }
                        entries.into_iter().collect::<Vec<_>>().join("\n")
                    }
                    _ => format!("ls: cannot access '{path}': No such file or directory"),
                }
            }
            "cat" => {
                let mut out = String::new();
                for a in &args {
                    match self.resolve(a) {
                        Ok(rel) if self.files.contains_key(&rel) => {
                            out.push_str(&String::from_utf8_lossy(&self.files[&rel]))
                        }
                        _ => out.push_str(&format!("cat: {a}: No such file or directory\n")),
                    }
                }
                out.strip_suffix('\n').unwrap_or(&out).to_string()
            }
            "grep" => self.grep(&flags, &args),
            "find" => {
                let dir = args.first().filter(|a| !a.starts_with('-')).map_or(".", |s| s.as_str());
                let name_at = words.iter().position(|w| w == "-name");
                let pattern = name_at.and_then(|i| words.get(i + 1)).map(|s| s.as_str()).unwrap_or("*");
                match self.resolve(dir) {
                    Ok(rel) if self.is_dir(&rel) => {
                        let prefix = if dir.ends_with('/') { dir.trim_end_matches('/') } else { dir };
                        self.files
                            .keys()
                            .filter(|k| within(&rel, k))
                            .filter(|k| glob_match(pattern, k.rsplit('/').next().unwrap_or(k)))
                            .map(|k| {
                                let rest = if rel.is_empty() { k.as_str() } else { &k[rel.len() + 1..] };
                                format!("{prefix}/{rest}")
                            })
                            .collect::<Vec<_>>()
                            .join("\n")
                    }
                    _ => format!("find: '{dir}': No such file or directory"),
                }
            }
            other => return format!("bash: {other}: command not available in this environment"),
        };
        if out.is_empty() {
            "Your command ran successfully and did not produce any output.".into()
        } else {
            out
        }
    }

    fn grep(&self, flags: &[&String], args: &[&String]) -> String {
        let Some(term) = args.first() else { return "usage: grep [-rnl] PATTERN [PATH...]".into() };
        let letters: String = flags.iter().map(|f| f.trim_start_matches('-')).collect();
        if let Some(bad) = letters.chars().find(|c| !"rnlRi".contains(*c)) {
            return format!("grep: unsupported option -- '{bad}'");
        }
        let (numbers, names_only, fold) = (letters.contains('n'), letters.contains('l'), letters.contains('i'));
        let recursive = letters.contains('r') || letters.contains('R');
        let implicit = args.len() == 1;
        let paths: Vec<&str> = if implicit { vec!["."] } else { args[1..].iter().map(|s| s.as_str()).collect() };
        let needle = if fold { term.to_lowercase() } else { term.to_string() };
        let mut out = Vec::new();
        for p in paths {
            let rel = match self.resolve(p) {
                Ok(r) => r,
                Err(e) => {
                    out.push(format!("grep: {e}"));
                    continue;
                }
            };
            let targets: Vec<&String> = if self.files.contains_key(&rel) {
                self.files.keys().filter(|k| **k == rel).collect()
            } else if self.is_dir(&rel) && recursive {
                self.files.keys().filter(|k| within(&rel, k)).collect()
            } else if self.is_dir(&rel) {
                out.push(format!("grep: {p}: Is a directory"));
                continue;
            } else {
                out.push(format!("grep: {p}: No such file or directory"));
                continue;
            };
            for k in targets {
                let rest = &k[(rel.len() + usize::from(!rel.is_empty())).min(k.len())..];
                let shown = if rel == *k {
                    p.to_string()
                } else if implicit {
                    rest.to_string()
                } else {
                    format!("{}/{rest}", p.trim_end_matches('/'))
                };
                let text = String::from_utf8_lossy(&self.files[k]).into_owned();
                for (i, line) in text.lines().enumerate() {
                    let hay = if fold { line.to_lowercase() } else { line.to_string() };
                    if hay.contains(&needle) {
                        if names_only {
                            out.push(shown.clone());
                            break;
                        }
                        out.push(if numbers { format!("{shown}:{}:{line}", i + 1) } else { format!("{shown}:{line}") });
                    }
                }
            }
        }
        out.join("\n")
    }
}
