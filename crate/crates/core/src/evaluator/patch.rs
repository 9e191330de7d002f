//! Unified diffs: parsing, serialization, atomic application, and generation.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatchError {
    #[error("malformed diff at line {line}: {reason}")]
    MalformedDiff { line: usize, reason: String },
    /// `hunk` is 1-based within the file section.
    #[error("hunk {hunk} does not apply to {file}")]
    ContextMismatch { file: String, hunk: usize },
    #[error("{file}: {reason}")]
    FileState { file: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LineKind {
    Context,
    Remove,
    Add,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HunkLine {
    pub kind: LineKind,
    pub text: String,
    /// Followed by a "\ No newline at end of file" marker.
    pub no_newline: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    /// Text after the closing `@@` (function context), including its leading space.
    pub section: String,
    /// Whether `,len` was written for a length of 1.
    pub explicit_lens: (bool, bool),
    pub lines: Vec<HunkLine>,
}

impl Hunk {
    fn side(&self, old: bool) -> Vec<Vec<u8>> {
        self.lines
            .iter()
            .filter(|l| match l.kind {
                LineKind::Context => true,
                LineKind::Remove => old,
                LineKind::Add => !old,
            })
            .map(|l| {
                let mut b = l.text.as_bytes().to_vec();
                if !l.no_newline {
                    b.push(b'\n');
                }
                b
            })
            .collect()
    }

    pub fn old_lines(&self) -> Vec<Vec<u8>> {
        self.side(true)
    }

    pub fn new_lines(&self) -> Vec<Vec<u8>> {
        self.side(false)
    }

    fn header(&self) -> String {
        let range = |start: usize, len: usize, explicit: bool| {
            if len == 1 && !explicit {
                format!("{start}")
            } else {
                format!("{start},{len}")
            }
        };
        format!(
            "@@ -{} +{} @@{}",
            range(self.old_start, self.old_len, self.explicit_lens.0),
            range(self.new_start, self.new_len, self.explicit_lens.1),
            self.section
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilePatch {
    /// Every line before the first hunk (`diff --git`, `index`, `---`, `+++`, ...), verbatim.
    pub header: Vec<String>,
    /// `None` for a created file.
    pub old_path: Option<String>,
    /// `None` for a deleted file.
    pub new_path: Option<String>,
    pub hunks: Vec<Hunk>,
}

impl FilePatch {
    /// The path this section edits.
    pub fn path(&self) -> &str {
        self.new_path.as_deref().or(self.old_path.as_deref()).unwrap_or_default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    /// Lines before the first file section.
    pub preamble: Vec<String>,
    pub files: Vec<FilePatch>,
}

fn hunk_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^@@ -(\d+)(,(\d+))? \+(\d+)(,(\d+))? @@(.*)$").unwrap())
}

fn strip_path(raw: &str) -> Option<String> {
    let raw = raw.split('\t').next().unwrap_or(raw).trim_end();
    if raw == "/dev/null" {
        return None;
    }
    let p = raw.strip_prefix("a/").or_else(|| raw.strip_prefix("b/")).unwrap_or(raw);
    Some(p.to_string())
}

/// `P` from `diff --git a/P b/P`.
fn git_header_path(line: &str) -> Option<String> {
    let rest = line.strip_prefix("diff --git a/")?;
    let n = rest.len().checked_sub(3)? / 2;
    let (left, right) = (rest.get(..n)?, rest.get(n..)?);
    (right.strip_prefix(" b/")? == left).then(|| left.to_string())
}

fn malformed(line: usize, reason: impl Into<String>) -> PatchError {
    PatchError::MalformedDiff { line, reason: reason.into() }
}

impl Patch {
    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Parse unified-diff text. Blank or whitespace-only input is the empty patch.
    pub fn parse(text: &str) -> Result<Patch, PatchError> {
        // split on LF only so CR bytes of CRLF files survive
        let mut lines: Vec<&str> = if text.is_empty() { Vec::new() } else { text.split('\n').collect() };
        if text.ends_with('\n') {
            lines.pop();
        }
        let mut patch = Patch::default();
        let mut i = 0;
        let starts_file = |i: usize| {
            lines[i].starts_with("diff ")
                || (lines[i].starts_with("--- ") && lines.get(i + 1).is_some_and(|l| l.starts_with("+++ ")))
        };
        while i < lines.len() && !starts_file(i) {
            patch.preamble.push(lines[i].to_string());
            i += 1;
        }
        if patch.preamble.iter().any(|l| l.starts_with("@@")) {
            return Err(malformed(1, "hunk without file header"));
        }
        while i < lines.len() {
            let mut fp = FilePatch { header: Vec::new(), old_path: None, new_path: None, hunks: Vec::new() };
            let section_start = i;
            let (mut saw_old, mut saw_new) = (false, false);
            if lines[i].starts_with("diff ") {
                fp.header.push(lines[i].to_string());
                i += 1;
            }
            while i < lines.len()
                && !lines[i].starts_with("@@")
                && !(i > section_start && lines[i].starts_with("diff "))
            {
                let l = lines[i];
                if let Some(rest) = l.strip_prefix("--- ") {
                    fp.old_path = strip_path(rest);
                    saw_old = true;
                } else if let Some(rest) = l.strip_prefix("+++ ") {
                    fp.new_path = strip_path(rest);
                    saw_new = true;
                } else if l.starts_with("rename ") || l.starts_with("copy ") || l.starts_with("GIT binary patch") {
                    return Err(malformed(i + 1, "renames, copies and binary patches are not supported"));
                } else if saw_new {
                    return Err(malformed(i + 1, "expected a hunk header"));
                }
                fp.header.push(l.to_string());
                i += 1;
            }
            // git writes empty-file creations and deletions without ---/+++ lines or hunks
            let mut hunkless = false;
            if !saw_old && !saw_new {
                let git_path = fp.header.first().and_then(|l| git_header_path(l));
                let mode = |prefix: &str| fp.header.iter().any(|l| l.starts_with(prefix));
                match git_path {
                    Some(p) if mode("new file mode ") => fp.new_path = Some(p),
                    Some(p) if mode("deleted file mode ") => fp.old_path = Some(p),
                    _ => return Err(malformed(i.min(lines.len()).max(1), "file section lacks ---/+++ lines")),
                }
                hunkless = true;
            } else if !(saw_old && saw_new) {
                return Err(malformed(i.min(lines.len()).max(1), "file section lacks ---/+++ lines"));
            }
            if fp.old_path.is_none() && fp.new_path.is_none() {
                return Err(malformed(i, "both sides are /dev/null"));
            }
            while i < lines.len() && lines[i].starts_with("@@") {
                let caps = hunk_re().captures(lines[i]).ok_or_else(|| malformed(i + 1, "bad hunk header"))?;
                let num = |k: usize| caps.get(k).map(|m| m.as_str().parse::<usize>());
                let parse = |k: usize| -> Result<Option<usize>, PatchError> {
                    num(k).transpose().map_err(|_| malformed(i + 1, "hunk range overflow"))
                };
                let mut hunk = Hunk {
                    old_start: parse(1)?.unwrap(),
                    old_len: parse(3)?.unwrap_or(1),
                    new_start: parse(4)?.unwrap(),
                    new_len: parse(6)?.unwrap_or(1),
                    section: caps[7].to_string(),
                    explicit_lens: (caps.get(3).is_some(), caps.get(6).is_some()),
                    lines: Vec::new(),
                };
                i += 1;
                let (mut old_left, mut new_left) = (hunk.old_len, hunk.new_len);
                while old_left > 0 || new_left > 0 {
                    let Some(l) = lines.get(i) else {
                        return Err(malformed(i, "hunk is truncated"));
                    };
                    let (kind, body) = match l.as_bytes().first() {
                        Some(b' ') => (LineKind::Context, &l[1..]),
                        None => (LineKind::Context, ""),
                        Some(b'-') => (LineKind::Remove, &l[1..]),
                        Some(b'+') => (LineKind::Add, &l[1..]),
                        Some(b'\\') => {
                            mark_no_newline(&mut hunk, i)?;
                            i += 1;
                            continue;
                        }
                        _ => return Err(malformed(i + 1, "unexpected line inside hunk")),
                    };
                    match kind {
                        LineKind::Context if old_left > 0 && new_left > 0 => {
                            old_left -= 1;
                            new_left -= 1;
                        }
                        LineKind::Remove if old_left > 0 => old_left -= 1,
                        LineKind::Add if new_left > 0 => new_left -= 1,
                        _ => return Err(malformed(i + 1, "hunk line counts disagree with its header")),
                    }
                    hunk.lines.push(HunkLine { kind, text: body.to_string(), no_newline: false });
                    i += 1;
                }
                if lines.get(i).is_some_and(|l| l.starts_with('\\')) {
                    mark_no_newline(&mut hunk, i)?;
                    i += 1;
                }
                fp.hunks.push(hunk);
            }
            if hunkless && !fp.hunks.is_empty() {
                return Err(malformed(i, "hunks need ---/+++ lines"));
            }
            if fp.hunks.is_empty() && !hunkless {
                return Err(malformed(i.max(1), format!("no hunks for {}", fp.path())));
            }
            patch.files.push(fp);
            if i < lines.len() && !starts_file(i) {
                if lines[i..].iter().all(|l| l.trim().is_empty()) {
                    break;
                }
                return Err(malformed(i + 1, "unexpected text after hunk"));
            }
        }
        if patch.files.is_empty() && patch.preamble.iter().any(|l| !l.trim().is_empty()) {
            return Err(malformed(1, "no file sections found"));
        }
        Ok(patch)
    }

    /// Render back to unified-diff text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in &self.preamble {
            out.push_str(l);
            out.push('\n');
        }
        for f in &self.files {
            for l in &f.header {
                out.push_str(l);
                out.push('\n');
            }
            for h in &f.hunks {
                out.push_str(&h.header());
                out.push('\n');
                for l in &h.lines {
                    out.push(match l.kind {
                        LineKind::Context => ' ',
                        LineKind::Remove => '-',
                        LineKind::Add => '+',
                    });
                    out.push_str(&l.text);
                    out.push('\n');
                    if l.no_newline {
                        out.push_str("\\ No newline at end of file\n");
                    }
                }
            }
        }
        out
    }

    /// Distinct paths the patch edits, creates or deletes.
    pub fn touched_paths(&self) -> BTreeSet<String> {
        self.files.iter().map(|f| f.path().to_string()).collect()
    }

    /// Apply to an in-memory tree, all or nothing. Returns the touched paths.
    pub fn apply_to(&self, files: &mut BTreeMap<String, Vec<u8>>) -> Result<BTreeSet<String>, PatchError> {
        let updated = self.plan(|p| Ok(files.get(p).cloned()))?;
        for (path, content) in updated {
            match content {
                Some(c) => {
                    files.insert(path, c);
                }
                None => {
                    files.remove(&path);
                }
            }
        }
        Ok(self.touched_paths())
    }

    /// Compute the final content of every touched file without writing anything.
    /// `read` returns `None` for an absent file. A `None` in the result means "delete".
    pub fn plan(
        &self,
        mut read: impl FnMut(&str) -> Result<Option<Vec<u8>>, PatchError>,
    ) -> Result<BTreeMap<String, Option<Vec<u8>>>, PatchError> {
        let mut state: BTreeMap<String, Option<Vec<u8>>> = BTreeMap::new();
        for f in &self.files {
            let source = f.old_path.as_deref().unwrap_or_else(|| f.path());
            if !state.contains_key(source) {
                let current = read(source)?;
                state.insert(source.to_string(), current);
            }
            let current = state[source].clone();
            let base = match (&f.old_path, current) {
                (None, Some(_)) => {
                    return Err(PatchError::FileState { file: f.path().into(), reason: "already exists".into() })
                }
                (None, None) => Vec::new(),
                (Some(p), None) => {
                    return Err(PatchError::FileState { file: p.clone(), reason: "does not exist".into() })
                }
                (Some(_), Some(c)) => c,
            };
            let result = apply_hunks(&base, &f.hunks, f.path())?;
            if let (Some(old), Some(new)) = (&f.old_path, &f.new_path) {
                if old != new {
                    state.insert(old.clone(), None);
                }
            }
            match &f.new_path {
                Some(p) => {
                    state.insert(p.clone(), Some(result));
                }
                None => {
                    if !result.is_empty() {
                        return Err(PatchError::ContextMismatch { file: f.path().into(), hunk: f.hunks.len().max(1) });
                    }
                    state.insert(f.path().to_string(), None);
                }
            }
        }
        Ok(state)
    }
}

fn mark_no_newline(hunk: &mut Hunk, i: usize) -> Result<(), PatchError> {
    match hunk.lines.last_mut() {
        Some(l) if !l.no_newline => {
            l.no_newline = true;
            Ok(())
        }
        _ => Err(malformed(i + 1, "stray no-newline marker")),
    }
}

fn split_lines(bytes: &[u8]) -> Vec<&[u8]> {
    bytes.split_inclusive(|b| *b == b'\n').collect()
}

fn apply_hunks(base: &[u8], hunks: &[Hunk], file: &str) -> Result<Vec<u8>, PatchError> {
    let lines = split_lines(base);
    let mut out: Vec<u8> = Vec::with_capacity(base.len());
    let mut cursor = 0usize;
    for (k, h) in hunks.iter().enumerate() {
        let old = h.old_lines();
        let expected = if h.old_len == 0 { h.old_start } else { h.old_start.saturating_sub(1) };
        let mismatch = || PatchError::ContextMismatch { file: file.to_string(), hunk: k + 1 };
        let at = if old.is_empty() {
            if expected < cursor || expected > lines.len() {
                return Err(mismatch());
            }
            expected
        } else {
            let fits = |p: usize| {
                p + old.len() <= lines.len()
                    && lines[p..p + old.len()].iter().zip(&old).all(|(a, b)| *a == b.as_slice())
            };
            // nearest exact match at or after the previous hunk
            let max_off = lines.len().max(expected) + 1;
            (0..max_off)
                .flat_map(|d| [expected.checked_add(d), expected.checked_sub(d).filter(|_| d > 0)])
                .flatten()
                .find(|&p| p >= cursor && fits(p))
                .ok_or_else(mismatch)?
        };
        for l in &lines[cursor..at] {
            out.extend_from_slice(l);
        }
        for l in h.new_lines() {
            out.extend_from_slice(&l);
        }
        cursor = at + old.len();
    }
    for l in &lines[cursor..] {
        out.extend_from_slice(l);
    }
    Ok(out)
}

// ---- generation ----

/// Shortest edit script between two line sequences (Myers), as (kind, old index, new index).
fn edit_script(a: &[&[u8]], b: &[&[u8]]) -> Vec<(LineKind, usize, usize)> {
    let (n, m) = (a.len() as isize, b.len() as isize);
    let max = (n + m) as usize;
    let offset = max as isize + 1;
    let mut v = vec![0isize; 2 * max + 3];
    let mut trace: Vec<Vec<isize>> = Vec::new();
    'outer: for d in 0..=max as isize {
        trace.push(v.clone());
        let mut k = -d;
        while k <= d {
            let idx = (k + offset) as usize;
            let mut x = if k == -d || (k != d && v[idx - 1] < v[idx + 1]) { v[idx + 1] } else { v[idx - 1] + 1 };
            let mut y = x - k;
            while x < n && y < m && a[x as usize] == b[y as usize] {
                x += 1;
                y += 1;
            }
            v[idx] = x;
            if x >= n && y >= m {
                trace.push(v.clone());
                break 'outer;
            }
            k += 2;
        }
    }
    // backtrack
    let mut script = Vec::new();
    let (mut x, mut y) = (n, m);
    for d in (1..trace.len() as isize - 1).rev() {
        let v = &trace[d as usize];
        let k = x - y;
        let prev_k = if k == -d || (k != d && v[(k - 1 + offset) as usize] < v[(k + 1 + offset) as usize]) {
            k + 1
        } else {
            k - 1
        };
        let prev_x = v[(prev_k + offset) as usize];
        let prev_y = prev_x - prev_k;
        while x > prev_x && y > prev_y {
            x -= 1;
            y -= 1;
            script.push((LineKind::Context, x as usize, y as usize));
        }
        if x == prev_x {
            y -= 1;
            script.push((LineKind::Add, x as usize, y as usize));
        } else {
            x -= 1;
            script.push((LineKind::Remove, x as usize, y as usize));
        }
    }
    while x > 0 && y > 0 {
        x -= 1;
        y -= 1;
        script.push((LineKind::Context, x as usize, y as usize));
    }
    script.reverse();
    script
}

fn hunk_line(kind: LineKind, raw: &[u8]) -> HunkLine {
    let no_newline = !raw.ends_with(b"\n");
    let body = if no_newline { raw } else { &raw[..raw.len() - 1] };
    HunkLine { kind, text: String::from_utf8_lossy(body).into_owned(), no_newline }
}

/// Hunks turning `old` into `new` with `context` lines of context.
pub fn diff_hunks(old: &[u8], new: &[u8], context: usize) -> Vec<Hunk> {
    let a = split_lines(old);
    let b = split_lines(new);
    let prefix = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let suffix = a[prefix..].iter().rev().zip(b[prefix..].iter().rev()).take_while(|(x, y)| x == y).count();
    let mut script: Vec<(LineKind, usize, usize)> = (0..prefix).map(|i| (LineKind::Context, i, i)).collect();
    let middle = edit_script(&a[prefix..a.len() - suffix], &b[prefix..b.len() - suffix]);
    script.extend(middle.into_iter().map(|(k, x, y)| (k, x + prefix, y + prefix)));
    script.extend((0..suffix).map(|i| (LineKind::Context, a.len() - suffix + i, b.len() - suffix + i)));
    let changes: Vec<usize> = (0..script.len()).filter(|&i| script[i].0 != LineKind::Context).collect();
    let mut hunks = Vec::new();
    let mut i = 0;
    while i < changes.len() {
        // grow a group while the gap of context between changes is at most 2 * context
        let mut j = i;
        while j + 1 < changes.len() && changes[j + 1] - changes[j] <= 2 * context + 1 {
            j += 1;
        }
        let lo = changes[i].saturating_sub(context);
        let hi = (changes[j] + context + 1).min(script.len());
        let ops = &script[lo..hi];
        let mut hunk = Hunk {
            old_start: 0,
            old_len: 0,
            new_start: 0,
            new_len: 0,
            section: String::new(),
            explicit_lens: (false, false),
            lines: Vec::new(),
        };
        let (first_old, first_new) = (ops[0].1, ops[0].2);
        for &(kind, x, y) in ops {
            let raw = match kind {
                LineKind::Add => b[y],
                _ => a[x],
            };
            match kind {
                LineKind::Context => {
                    hunk.old_len += 1;
                    hunk.new_len += 1;
                }
                LineKind::Remove => hunk.old_len += 1,
                LineKind::Add => hunk.new_len += 1,
            }
            hunk.lines.push(hunk_line(kind, raw));
        }
        hunk.old_start = if hunk.old_len == 0 { first_old } else { first_old + 1 };
        hunk.new_start = if hunk.new_len == 0 { first_new } else { first_new + 1 };
        hunk.explicit_lens = (hunk.old_len != 1, hunk.new_len != 1);
        hunks.push(hunk);
        i = j + 1;
    }
    hunks
}

/// Patch turning tree `old` into tree `new` (paths present in either).
pub fn diff_trees(old: &BTreeMap<String, Vec<u8>>, new: &BTreeMap<String, Vec<u8>>) -> Patch {
    let paths: BTreeSet<&String> = old.keys().chain(new.keys()).collect();
    let mut patch = Patch::default();
    for p in paths {
        let (o, n) = (old.get(p), new.get(p));
        if o == n {
            continue;
        }
        let hunks = diff_hunks(o.map_or(&[][..], |v| v), n.map_or(&[][..], |v| v), 3);
        let mut header = vec![format!("diff --git a/{p} b/{p}")];
        match (o, n) {
            (None, _) => header.push("new file mode 100644".into()),
            (_, None) => header.push("deleted file mode 100644".into()),
            _ => {}
        }
        if !hunks.is_empty() {
            header.push(if o.is_some() { format!("--- a/{p}") } else { "--- /dev/null".into() });
            header.push(if n.is_some() { format!("+++ b/{p}") } else { "+++ /dev/null".into() });
        }
        patch.files.push(FilePatch { header, old_path: o.map(|_| p.clone()), new_path: n.map(|_| p.clone()), hunks });
    }
    patch
}
