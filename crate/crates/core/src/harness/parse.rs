//! Model reply → one discussion plus one tool command.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchScope {
    /// `search_file <term> [<file>]`
    File,
    /// `search_dir <term> [<dir>]`
    Dir,
    /// `find_file <name> [<dir>]`
    FindFile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToolCommand {
    Open {
        path: String,
        line: Option<usize>,
    },
    Goto {
        line: usize,
    },
    ScrollDown,
    ScrollUp,
    Search {
        scope: SearchScope,
        term: String,
        target: Option<String>,
    },
    Create {
        path: String,
    },
    /// Replace lines `line_start..=line_end` of `file` (the open file when absent).
    Edit {
        file: Option<String>,
        line_start: usize,
        line_end: usize,
        replacement: String,
    },
    Submit,
    Shell {
        raw: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{reason}")]
pub struct FormatViolation {
    pub reason: String,
}

impl FormatViolation {
    fn new(reason: impl Into<String>) -> Self {
        FormatViolation { reason: reason.into() }
    }

    /// Text fed back to the model as the observation.
    pub fn corrective_message(&self) -> String {
        format!(
            "Your output was not formatted correctly ({}). Reply with a DISCUSSION section followed by exactly one \
             command inside a single ``` block, then wait for its output.",
            self.reason
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedReply {
    /// Everything before the opening fence.
    pub thought: String,
    /// The fenced command text without its trailing newline.
    pub raw: String,
    pub command: ToolCommand,
}

/// Split on whitespace, honoring single and double quotes.
pub fn split_words(line: &str) -> Result<Vec<String>, FormatViolation> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quote: Option<char> = None;
    let mut in_word = false;
    for c in line.chars() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => cur.push(c),
            None if c == '"' || c == '\'' => {
                quote = Some(c);
                in_word = true;
            }
            None if c.is_whitespace() => {
                if in_word {
                    out.push(std::mem::take(&mut cur));
                    in_word = false;
                }
            }
            None => {
                cur.push(c);
                in_word = true;
            }
        }
    }
    if quote.is_some() {
        return Err(FormatViolation::new("unbalanced quote"));
    }
    if in_word {
        out.push(cur);
    }
    Ok(out)
}

fn parse_line_number(word: &str) -> Result<usize, FormatViolation> {
    word.parse::<usize>()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| FormatViolation::new(format!("'{word}' is not a line number")))
}

fn parse_range(word: &str) -> Result<(usize, usize), FormatViolation> {
    let (a, b) = word.split_once(':').ok_or_else(|| FormatViolation::new("edit expects <start>:<end>"))?;
    let (a, b) = (parse_line_number(a)?, parse_line_number(b)?);
    if a > b {
        return Err(FormatViolation::new(format!("edit range {a}:{b} is reversed")));
    }
    Ok((a, b))
}

/// Parse the text inside a command block.
pub fn parse_command(block: &str) -> Result<ToolCommand, FormatViolation> {
    let mut lines = block.lines();
    let first = lines.by_ref().find(|l| !l.trim().is_empty()).ok_or_else(|| FormatViolation::new("empty command"))?;
    let words = split_words(first)?;
    let rest: Vec<&str> = lines.collect();
    if words[0] == "edit" {
        let (file, range) = match words.len() {
            2 => (None, &words[1]),
            3 => (Some(words[1].clone()), &words[2]),
            _ => return Err(FormatViolation::new("edit expects [<file>] <start>:<end>")),
        };
        let (line_start, line_end) = parse_range(range)?;
        let end = rest
            .iter()
            .position(|l| l.trim_end() == "end_of_edit")
            .ok_or_else(|| FormatViolation::new("edit is missing end_of_edit"))?;
        if rest[end + 1..].iter().any(|l| !l.trim().is_empty()) {
            return Err(FormatViolation::new("more than one command"));
        }
        let replacement = rest[..end].iter().map(|l| format!("{l}\n")).collect::<String>();
        return Ok(ToolCommand::Edit { file, line_start, line_end, replacement });
    }
    if rest.iter().any(|l| !l.trim().is_empty()) {
        return Err(FormatViolation::new("more than one command"));
    }
    let arity = |min: usize, max: usize| -> Result<(), FormatViolation> {
        let n = words.len() - 1;
        if n < min || n > max {
            return Err(FormatViolation::new(format!("{} takes {min} to {max} argument(s)", words[0])));
        }
        Ok(())
    };
    let arg = |i: usize| words.get(i).cloned();
    Ok(match words[0].as_str() {
        "open" => {
            arity(1, 2)?;
            ToolCommand::Open { path: words[1].clone(), line: arg(2).map(|w| parse_line_number(&w)).transpose()? }
        }
        "goto" => {
            arity(1, 1)?;
            ToolCommand::Goto { line: parse_line_number(&words[1])? }
        }
        "scroll_down" => {
            arity(0, 0)?;
            ToolCommand::ScrollDown
        }
        "scroll_up" => {
            arity(0, 0)?;
            ToolCommand::ScrollUp
        }
        "search_file" | "search_dir" | "find_file" => {
            arity(1, 2)?;
            let scope = match words[0].as_str() {
                "search_file" => SearchScope::File,
                "search_dir" => SearchScope::Dir,
                _ => SearchScope::FindFile,
            };
            ToolCommand::Search { scope, term: words[1].clone(), target: arg(2) }
        }
        "create" => {
            arity(1, 1)?;
            ToolCommand::Create { path: words[1].clone() }
        }
        "submit" => {
            arity(0, 0)?;
            ToolCommand::Submit
        }
        _ => ToolCommand::Shell { raw: first.trim().to_string() },
    })
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

/// Extract the discussion and the single fenced command from a model reply.
pub fn parse_reply(text: &str) -> Result<ParsedReply, FormatViolation> {
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let fences: Vec<usize> = lines.iter().enumerate().filter(|(_, l)| is_fence(l)).map(|(i, _)| i).collect();
    match fences.len() {
        0 => return Err(FormatViolation::new("no command block")),
        1 => return Err(FormatViolation::new("unterminated command block")),
        2 => {}
        _ => return Err(FormatViolation::new("multiple command blocks")),
    }
    let (open, close) = (fences[0], fences[1]);
    let thought: String = lines[..open].concat();
    let body: String = lines[open + 1..close].concat();
    let raw = body.strip_suffix('\n').unwrap_or(&body).to_string();
    let command = parse_command(&raw)?;
    Ok(ParsedReply { thought, raw, command })
}
