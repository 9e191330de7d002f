//! Python source parsing into a small, assertion-oriented syntax tree.

mod lexer;
mod literal;
mod node;
mod parser;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use node::*;

/// Grammar the parser implements.
pub const GRAMMAR_VERSION: &str = "3.10";

/// Ill-formed source. `line` is 1-based; 0 means the bytes were not valid UTF-8.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub struct ParseFailure {
    pub line: u32,
    pub column: u32,
    pub message: String,
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (line {}, column {})", self.message, self.line, self.column)
    }
}

/// Parse UTF-8 source text.
pub fn parse_source(text: &str, display_path: &str) -> Result<SyntaxTree, ParseFailure> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let root = parser::parse_module(text)?;
    Ok(SyntaxTree { path: display_path.to_string(), root })
}

/// Parse raw file bytes; invalid UTF-8 is reported at line 0.
pub fn parse_bytes(bytes: &[u8], display_path: &str) -> Result<SyntaxTree, ParseFailure> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_source(text, display_path),
        Err(e) => Err(ParseFailure {
            line: 0,
            column: 0,
            message: format!("source is not valid UTF-8 (byte offset {})", e.valid_up_to()),
        }),
    }
}

/// Free-function form of [`SyntaxTree::walk`].
pub fn walk(tree: &SyntaxTree) -> Walk<'_> {
    tree.walk()
}

/// Free-function form of [`SyntaxTree::find_all`].
pub fn find_all<'a>(tree: &'a SyntaxTree, kind: NodeKind, name: Option<&str>) -> Vec<&'a SyntaxNode> {
    tree.find_all(kind, name)
}
