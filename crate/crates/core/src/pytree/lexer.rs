//! Python tokenizer: logical lines, INDENT/DEDENT bookkeeping, implicit
//! joining inside brackets, and raw string/number tokens.

use super::ParseFailure;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Tok {
    Name,
    Number,
    Str,
    Op,
    Newline,
    Indent,
    Dedent,
    End,
    /// Stands in for everything after a tokenizer failure.
    Error,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub kind: Tok,
    pub text: String,
    pub line: u32,
    pub col: u32,
    pub end_line: u32,
}

impl Token {
    pub fn is_op(&self, op: &str) -> bool {
        self.kind == Tok::Op && self.text == op
    }

    pub fn is_name(&self, name: &str) -> bool {
        self.kind == Tok::Name && self.text == name
    }
}

pub(crate) const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del",
    "elif", "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal",
    "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
];

pub(crate) fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

const OPERATORS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", ">>", "<<", "<=", ">=", "==", "!=", "+=", "-=", "*=",
    "/=", "%=", "&=", "|=", "^=", "@=", "+", "-", "*", "/", "%", "@", "&", "|", "^", "~", "<", ">", "(", ")", "[", "]",
    "{", "}", ",", ":", ".", ";", "=",
];

fn is_id_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

fn is_id_continue(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

struct Lexer<'a> {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    line_start: usize,
    tokens: Vec<Token>,
    indents: Vec<u32>,
    brackets: Vec<(char, u32, u32)>,
    at_line_start: bool,
    _src: &'a str,
}

fn fail(line: u32, column: u32, message: impl Into<String>) -> ParseFailure {
    ParseFailure { line, column, message: message.into() }
}

/// Tokenize a whole module.
pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, ParseFailure> {
    match tokenize_lenient(src) {
        (toks, None) => Ok(toks),
        (_, Some(e)) => Err(e.failure),
    }
}

/// A tokenizer failure plus the context needed to rank it against a grammar error.
#[derive(Debug, Clone)]
pub(crate) struct LexFailure {
    pub failure: ParseFailure,
    /// Hard errors (bad literal, stray bracket, ...) outrank an earlier grammar
    /// error; indentation and end-of-input conditions do not.
    pub hard: bool,
    /// Innermost bracket still open when tokenizing stopped: (char, line, column).
    pub open_bracket: Option<(char, u32, u32)>,
}

fn is_soft(message: &str) -> bool {
    [
        "unindent",
        "unexpected indent",
        "unexpected character after line continuation",
        "unexpected EOF",
        "too many nested",
    ]
    .iter()
    .any(|p| message.starts_with(p))
        || message.ends_with("was never closed")
}

/// Tokenize as far as possible. On failure the stream ends with an
/// [`Tok::Error`] token so that earlier grammar errors are still seen first.
pub(crate) fn tokenize_lenient(src: &str) -> (Vec<Token>, Option<LexFailure>) {
    let mut lx = Lexer {
        chars: src.chars().collect(),
        pos: 0,
        line: 1,
        line_start: 0,
        tokens: Vec::new(),
        indents: vec![0],
        brackets: Vec::new(),
        at_line_start: true,
        _src: src,
    };
    match lx.run() {
        Ok(()) => (lx.tokens, None),
        Err(e) => {
            let mut toks = lx.tokens;
            let line = toks.last().map_or(1, |t| t.end_line);
            toks.push(Token { kind: Tok::Error, text: e.message.clone(), line, col: 1, end_line: line });
            let hard = !is_soft(&e.message);
            (toks, Some(LexFailure { failure: e, hard, open_bracket: lx.brackets.last().copied() }))
        }
    }
}

impl Lexer<'_> {
    fn peek(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn col(&self) -> u32 {
        (self.pos - self.line_start) as u32 + 1
    }

    fn push(&mut self, kind: Tok, text: String, line: u32, col: u32) {
        let end_line = self.line;
        self.tokens.push(Token { kind, text, line, col, end_line });
    }

    fn newline(&mut self) {
        self.pos += 1;
        self.line += 1;
        self.line_start = self.pos;
    }

    fn last_is_newline_or_start(&self) -> bool {
        matches!(self.tokens.last().map(|t| t.kind), None | Some(Tok::Newline) | Some(Tok::Indent) | Some(Tok::Dedent))
    }

    fn run(&mut self) -> Result<(), ParseFailure> {
        loop {
            if self.at_line_start && self.brackets.is_empty() && !self.handle_indentation()? {
                break;
            }
            let Some(c) = self.peek(0) else { break };
            match c {
                ' ' | '\t' | '\x0c' => self.pos += 1,
                '\r' if self.peek(1) == Some('\n') => self.pos += 1,
                '\r' | '\n' => {
                    if self.brackets.is_empty() && !self.last_is_newline_or_start() {
                        let (line, col) = (self.line, self.col());
                        self.push(Tok::Newline, String::new(), line, col);
                    }
                    self.newline();
                    self.at_line_start = self.brackets.is_empty();
                }
                '#' => {
                    while let Some(c) = self.peek(0) {
                        if c == '\n' || c == '\r' {
                            break;
                        }
                        self.pos += 1;
                    }
                }
                '\\' => {
                    let next = self.peek(1);
                    if next == Some('\n') || (next == Some('\r') && self.peek(2) == Some('\n')) {
                        if next == Some('\r') {
                            self.pos += 1;
                        }
                        self.pos += 1;
                        self.newline();
                        if self.peek(0).is_none() {
                            return Err(fail(self.line - 1, 1, "unexpected EOF while parsing"));
                        }
                    } else {
                        return Err(fail(
                            self.line,
                            self.col(),
                            "unexpected character after line continuation character",
                        ));
                    }
                }
                c if is_id_start(c) => {
                    if self.string_prefix_len().is_some() {
                        self.lex_string()?;
                    } else {
                        self.lex_name();
                    }
                }
                '"' | '\'' => self.lex_string()?,
                c if c.is_ascii_digit() => self.lex_number()?,
                '.' if self.peek(1).is_some_and(|c| c.is_ascii_digit()) => self.lex_number()?,
                _ => self.lex_op()?,
            }
        }
        self.finish()
    }

    /// Consume leading whitespace of a physical line and emit INDENT/DEDENT.
    /// Returns false at end of input.
    fn handle_indentation(&mut self) -> Result<bool, ParseFailure> {
        loop {
            let mut width = 0u32;
            let mut scan = self.pos;
            while let Some(&c) = self.chars.get(scan) {
                match c {
                    ' ' => width += 1,
                    '\t' => width = (width / 8 + 1) * 8,
                    '\x0c' => width = 0,
                    _ => break,
                }
                scan += 1;
            }
            match self.chars.get(scan).copied() {
                None => {
                    self.pos = scan;
                    return Ok(false);
                }
                Some('#') | Some('\n') | Some('\r') => {
                    // blank or comment-only line: no indentation semantics
                    self.pos = scan;
                    while let Some(c) = self.peek(0) {
                        if c == '\n' || c == '\r' {
                            break;
                        }
                        self.pos += 1;
                    }
                    match self.peek(0) {
                        None => return Ok(false),
                        Some('\r') if self.peek(1) == Some('\n') => {
                            self.pos += 1;
                            self.newline();
                        }
                        Some(_) => self.newline(),
                    }
                    continue;
                }
                Some('\\') if matches!(self.chars.get(scan + 1), Some('\n') | Some('\r')) => {
                    // a continuation right at the start of a line acts like a blank
                    self.pos = scan;
                    self.at_line_start = false;
                    return Ok(true);
                }
                Some(_) => {
                    self.pos = scan;
                    self.at_line_start = false;
                    let current = *self.indents.last().unwrap();
                    let col = self.col();
                    if width > current {
                        if self.tokens.is_empty() || self.tokens.last().map(|t| t.kind) != Some(Tok::Newline) {
                            return Err(fail(self.line, col, "unexpected indent"));
                        }
                        self.indents.push(width);
                        let line = self.line;
                        self.push(Tok::Indent, String::new(), line, 1);
                    } else if width < current {
                        while *self.indents.last().unwrap() > width {
                            self.indents.pop();
                            let line = self.line;
                            self.push(Tok::Dedent, String::new(), line, 1);
                        }
                        if *self.indents.last().unwrap() != width {
                            return Err(fail(self.line, col, "unindent does not match any outer indentation level"));
                        }
                    }
                    return Ok(true);
                }
            }
        }
    }

    fn finish(&mut self) -> Result<(), ParseFailure> {
        if let Some(&(open, line, col)) = self.brackets.last() {
            return Err(fail(line, col, format!("'{open}' was never closed")));
        }
        let last_line = self.tokens.last().map(|t| t.end_line).unwrap_or(1);
        if !self.last_is_newline_or_start() {
            self.tokens.push(Token {
                kind: Tok::Newline,
                text: String::new(),
                line: last_line,
                col: 0,
                end_line: last_line,
            });
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.tokens.push(Token {
                kind: Tok::Dedent,
                text: String::new(),
                line: last_line,
                col: 0,
                end_line: last_line,
            });
        }
        self.tokens.push(Token { kind: Tok::End, text: String::new(), line: last_line, col: 0, end_line: last_line });
        Ok(())
    }

    fn lex_name(&mut self) {
        let (line, col) = (self.line, self.col());
        let start = self.pos;
        while self.peek(0).is_some_and(is_id_continue) {
            self.pos += 1;
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        self.push(Tok::Name, text, line, col);
    }

    /// Length of a string prefix (`rb`, `f`, ...) immediately followed by a quote.
    fn string_prefix_len(&self) -> Option<usize> {
        let mut n = 0;
        while n < 3 {
            match self.peek(n) {
                Some('"') | Some('\'') => break,
                Some(c) if "rRbBuUfF".contains(c) => n += 1,
                _ => return None,
            }
        }
        if !matches!(self.peek(n), Some('"') | Some('\'')) {
            return None;
        }
        let prefix: String = self.chars[self.pos..self.pos + n].iter().collect::<String>().to_ascii_lowercase();
        const VALID: &[&str] = &["", "r", "u", "b", "f", "br", "rb", "fr", "rf"];
        VALID.contains(&prefix.as_str()).then_some(n)
    }

    fn lex_string(&mut self) -> Result<(), ParseFailure> {
        let (line, col) = (self.line, self.col());
        let start = self.pos;
        let prefix_len = self.string_prefix_len().unwrap_or(0);
        self.pos += prefix_len;
        let quote = self.peek(0).unwrap();
        let triple = self.peek(1) == Some(quote) && self.peek(2) == Some(quote);
        self.pos += if triple { 3 } else { 1 };
        loop {
            let Some(c) = self.peek(0) else {
                let msg =
                    if triple { "unterminated triple-quoted string literal" } else { "unterminated string literal" };
                return Err(fail(line, col, msg));
            };
            match c {
                '\\' => {
                    if self.peek(1) == Some('\r') && self.peek(2) == Some('\n') {
                        self.pos += 1;
                    }
                    if matches!(self.peek(1), Some('\n') | Some('\r')) {
                        self.pos += 1;
                        self.newline();
                    } else {
                        self.pos += 2;
                    }
                }
                '\n' | '\r' => {
                    if !triple {
                        return Err(fail(line, col, "unterminated string literal"));
                    }
                    if c == '\r' && self.peek(1) == Some('\n') {
                        self.pos += 1;
                    }
                    self.newline();
                }
                c if c == quote => {
                    if !triple {
                        self.pos += 1;
                        break;
                    }
                    if self.peek(1) == Some(quote) && self.peek(2) == Some(quote) {
                        self.pos += 3;
                        break;
                    }
                    self.pos += 1;
                }
                _ => self.pos += 1,
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        self.push(Tok::Str, text, line, col);
        Ok(())
    }

    fn lex_number(&mut self) -> Result<(), ParseFailure> {
        let (line, col) = (self.line, self.col());
        let start = self.pos;
        let digits = |lx: &mut Self, ok: &dyn Fn(char) -> bool| {
            while let Some(c) = lx.peek(0) {
                if ok(c) || (c == '_' && lx.peek(1).is_some_and(ok)) {
                    lx.pos += 1;
                } else {
                    break;
                }
            }
        };
        let dec = |c: char| c.is_ascii_digit();
        if self.peek(0) == Some('0') && matches!(self.peek(1), Some('x' | 'X' | 'o' | 'O' | 'b' | 'B')) {
            let radix_ok: fn(char) -> bool = match self.peek(1).unwrap().to_ascii_lowercase() {
                'x' => |c: char| c.is_ascii_hexdigit(),
                'o' => |c: char| ('0'..='7').contains(&c),
                _ => |c: char| c == '0' || c == '1',
            };
            self.pos += 2;
            if self.peek(0) == Some('_') {
                self.pos += 1;
            }
            let body_start = self.pos;
            digits(self, &radix_ok);
            if self.pos == body_start {
                return Err(fail(line, col, "invalid number literal"));
            }
        } else {
            digits(self, &dec);
            let mut is_float = false;
            if self.peek(0) == Some('.') {
                is_float = true;
                self.pos += 1;
                digits(self, &dec);
            }
            if matches!(self.peek(0), Some('e' | 'E')) {
                let sign = usize::from(matches!(self.peek(1), Some('+' | '-')));
                if self.peek(1 + sign).is_some_and(dec) {
                    is_float = true;
                    self.pos += 1 + sign;
                    digits(self, &dec);
                } else {
                    return Err(fail(line, col, "invalid decimal literal"));
                }
            }
            if matches!(self.peek(0), Some('j' | 'J')) {
                self.pos += 1;
                is_float = true;
            }
            let text: String = self.chars[start..self.pos].iter().collect();
            if !is_float && text.len() > 1 && text.starts_with('0') && text.chars().any(|c| c != '0' && c != '_') {
                return Err(fail(line, col, "leading zeros in decimal integer literals are not permitted"));
            }
        }
        if self.peek(0).is_some_and(is_id_start) {
            return Err(fail(line, self.col(), "invalid decimal literal"));
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        self.push(Tok::Number, text, line, col);
        Ok(())
    }

    fn lex_op(&mut self) -> Result<(), ParseFailure> {
        let (line, col) = (self.line, self.col());
        for op in OPERATORS {
            let n = op.chars().count();
            if self.pos + n <= self.chars.len() && self.chars[self.pos..self.pos + n].iter().copied().eq(op.chars()) {
                let c = op.chars().next().unwrap();
                match c {
                    '(' | '[' | '{' if n == 1 => self.brackets.push((c, line, col)),
                    ')' | ']' | '}' if n == 1 => {
                        let want = match c {
                            ')' => '(',
                            ']' => '[',
                            _ => '{',
                        };
                        match self.brackets.pop() {
                            Some((open, _, _)) if open == want => {}
                            Some((open, oline, _)) => {
                                let msg = if oline == line {
                                    format!("closing parenthesis '{c}' does not match opening parenthesis '{open}'")
                                } else {
                                    format!(
                                        "closing parenthesis '{c}' does not match opening parenthesis '{open}' on line {oline}"
                                    )
                                };
                                return Err(fail(line, col, msg));
                            }
                            None => return Err(fail(line, col, format!("unmatched '{c}'"))),
                        }
                    }
                    _ => {}
                }
                self.pos += n;
                self.push(Tok::Op, op.to_string(), line, col);
                return Ok(());
            }
        }
        let c = self.peek(0).unwrap();
        if c.is_ascii() {
            // stray ASCII punctuation is a grammar error, not a tokenizer one
            self.pos += 1;
            self.push(Tok::Op, c.to_string(), line, col);
            return Ok(());
        }
        Err(fail(line, col, format!("invalid character '{c}' (U+{:04X})", c as u32)))
    }
}
