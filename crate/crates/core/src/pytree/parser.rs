//! Recursive-descent parser for the Python 3.10 grammar, lowering straight
//! into the bounded node taxonomy.

use std::collections::HashSet;

use super::lexer::{is_keyword, tokenize, tokenize_lenient, LexFailure, Tok, Token};
use super::literal::{decode_bytes, decode_str, float_value, int_to_decimal};
use super::node::*;
use super::ParseFailure;

type PResult<T> = Result<T, ParseFailure>;

const MAX_DEPTH: u32 = 150;

#[derive(Clone, Copy, PartialEq, Eq)]
enum TargetCtx {
    Assign,
    AugAssign,
    Annotated,
    Delete,
    For,
    With,
}

pub(crate) struct Parser {
    toks: Vec<Token>,
    pos: usize,
    last_end: u32,
    depth: u32,
    lex_failure: Option<ParseFailure>,
}

pub(crate) fn parse_module(src: &str) -> PResult<SyntaxNode> {
    let (toks, lex) = tokenize_lenient(src);
    let mut p = Parser::new(toks);
    p.lex_failure = lex.as_ref().map(|l| l.failure.clone());
    let mut body = Vec::new();
    let mut result = Ok(());
    while p.cur().kind != Tok::End {
        result = p.statement(&mut body);
        if result.is_err() {
            break;
        }
    }
    match (result, lex) {
        (Ok(()), None) => {}
        (Ok(()), Some(l)) => return Err(l.failure),
        (Err(e), None) => return Err(e),
        (Err(e), Some(l)) => return Err(rank_failures(e, l)),
    }
    let lines = line_count(src).max(1);
    Ok(SyntaxNode::new(NodeKind::Module, Span::new(1, lines)).with_children(body))
}

/// Choose between a grammar error and a tokenizer error found further on,
/// the way CPython's second tokenizer pass does.
fn rank_failures(grammar: ParseFailure, lex: LexFailure) -> ParseFailure {
    if grammar == lex.failure || grammar.message == "unexpected indent" {
        return grammar;
    }
    if let Some((open, line, col)) = lex.open_bracket {
        if line < grammar.line {
            return ParseFailure { line, column: col, message: format!("'{open}' was never closed") };
        }
    }
    if lex.hard {
        lex.failure
    } else {
        grammar
    }
}

fn line_count(src: &str) -> u32 {
    let mut n = src.bytes().filter(|&b| b == b'\n').count() as u32;
    if !src.is_empty() && !src.ends_with('\n') {
        n += 1;
    }
    n
}

fn other_kind_desc(n: &SyntaxNode) -> &'static str {
    match n.kind {
        NodeKind::Call => "function call",
        NodeKind::Constant => match n.literal() {
            Some(Literal::None) => "None",
            Some(Literal::Bool(true)) => "True",
            Some(Literal::Bool(false)) => "False",
            Some(Literal::Ellipsis) => "ellipsis",
            _ => "literal",
        },
        _ => match n.other_kind() {
            Some(OtherKind::Compare) => "comparison",
            Some(OtherKind::Lambda) => "lambda",
            Some(OtherKind::IfExp) => "conditional expression",
            Some(OtherKind::NamedExpr) => "named expression",
            Some(OtherKind::Await) => "await expression",
            Some(OtherKind::Yield) | Some(OtherKind::YieldFrom) => "yield expression",
            Some(OtherKind::Dict) => "dict literal",
            Some(OtherKind::Set) => "set display",
            Some(OtherKind::ListComp) => "list comprehension",
            Some(OtherKind::SetComp) => "set comprehension",
            Some(OtherKind::DictComp) => "dict comprehension",
            Some(OtherKind::GeneratorExp) => "generator expression",
            Some(OtherKind::JoinedStr) => "f-string expression",
            Some(OtherKind::Tuple) => "tuple",
            Some(OtherKind::List) => "list",
            Some(OtherKind::Starred) => "starred",
            _ => "expression",
        },
    }
}

impl Parser {
    fn new(toks: Vec<Token>) -> Self {
        Parser { toks, pos: 0, last_end: 1, depth: 0, lex_failure: None }
    }

    // ---- token plumbing ----

    fn cur(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek(&self, n: usize) -> &Token {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if matches!(t.kind, Tok::Name | Tok::Number | Tok::Str | Tok::Op) {
            self.last_end = t.end_line;
        }
        if !matches!(t.kind, Tok::End | Tok::Error) {
            self.pos += 1;
        }
        t
    }

    fn at_op(&self, op: &str) -> bool {
        self.cur().is_op(op)
    }

    fn at_kw(&self, kw: &str) -> bool {
        self.cur().is_name(kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.at_op(op) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn fail_at(&self, t: &Token, msg: impl Into<String>) -> ParseFailure {
        if t.kind == Tok::Error {
            if let Some(e) = &self.lex_failure {
                return e.clone();
            }
        }
        ParseFailure { line: t.line, column: t.col.max(1), message: msg.into() }
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(self.fail_at(self.cur(), msg))
    }

    fn invalid<T>(&self) -> PResult<T> {
        let t = self.cur();
        let msg = match t.kind {
            Tok::Indent => "unexpected indent".to_string(),
            Tok::End => "unexpected EOF while parsing".to_string(),
            _ => "invalid syntax".to_string(),
        };
        Err(self.fail_at(t, msg))
    }

    fn expect_op(&mut self, op: &str) -> PResult<Token> {
        if self.at_op(op) {
            Ok(self.bump())
        } else if op == ":" {
            self.err("expected ':'")
        } else {
            self.invalid()
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Token> {
        if self.at_kw(kw) {
            Ok(self.bump())
        } else {
            self.err(format!("expected '{kw}'"))
        }
    }

    fn expect_newline(&mut self) -> PResult<()> {
        if self.cur().kind == Tok::Newline {
            self.bump();
            Ok(())
        } else {
            self.invalid()
        }
    }

    fn ident(&mut self) -> PResult<Token> {
        let t = self.cur();
        if t.kind == Tok::Name && !is_keyword(&t.text) {
            Ok(self.bump())
        } else {
            self.invalid()
        }
    }

    fn span_from(&self, start: u32) -> Span {
        Span::new(start, self.last_end.max(start))
    }

    fn other(&self, what: OtherKind, start: u32, children: Vec<SyntaxNode>) -> SyntaxNode {
        SyntaxNode::other(what, self.span_from(start), children)
    }

    fn save(&self) -> (usize, u32) {
        (self.pos, self.last_end)
    }

    fn restore(&mut self, s: (usize, u32)) {
        self.pos = s.0;
        self.last_end = s.1;
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return self.err("too many nested expressions");
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    // ---- statements ----

    fn statement(&mut self, out: &mut Vec<SyntaxNode>) -> PResult<()> {
        let t = self.cur().clone();
        match t.kind {
            Tok::Indent => return Err(self.fail_at(&t, "unexpected indent")),
            Tok::Newline | Tok::Dedent | Tok::End | Tok::Error => return self.invalid(),
            _ => {}
        }
        if t.is_op("@") {
            out.push(self.decorated()?);
            return Ok(());
        }
        if t.kind == Tok::Name {
            let node = match t.text.as_str() {
                "def" => Some(self.funcdef(t.line, Vec::new(), false)?),
                "class" => Some(self.classdef(t.line, Vec::new())?),
                "if" => Some(self.if_stmt()?),
                "while" => Some(self.while_stmt()?),
                "for" => Some(self.for_stmt(t.line, false)?),
                "try" => Some(self.try_stmt()?),
                "with" => Some(self.with_stmt(t.line, false)?),
                "async" => Some(self.async_stmt(Vec::new())?),
                "match" => self.try_match_stmt()?,
                _ => None,
            };
            if let Some(node) = node {
                out.push(node);
                return Ok(());
            }
        }
        self.simple_stmts(out)
    }

    fn block(&mut self) -> PResult<Vec<SyntaxNode>> {
        let mut body = Vec::new();
        if self.cur().kind == Tok::Newline {
            self.bump();
            if self.cur().kind != Tok::Indent {
                return self.err("expected an indented block");
            }
            self.bump();
            while !matches!(self.cur().kind, Tok::Dedent | Tok::End) {
                self.statement(&mut body)?;
            }
            if self.cur().kind == Tok::Dedent {
                self.bump();
            }
        } else {
            self.simple_stmts(&mut body)?;
        }
        Ok(body)
    }

    fn decorated(&mut self) -> PResult<SyntaxNode> {
        let start = self.cur().line;
        let mut decorators = Vec::new();
        while self.eat_op("@") {
            decorators.push(self.named_expr()?);
            self.expect_newline()?;
        }
        let t = self.cur().clone();
        match t.text.as_str() {
            "def" if t.kind == Tok::Name => self.funcdef(start, decorators, false),
            "class" if t.kind == Tok::Name => self.classdef(start, decorators),
            "async" if t.kind == Tok::Name && self.peek(1).is_name("def") => self.async_stmt_from(start, decorators),
            _ => self.invalid(),
        }
    }

    fn async_stmt(&mut self, decorators: Vec<SyntaxNode>) -> PResult<SyntaxNode> {
        let start = self.cur().line;
        self.async_stmt_from(start, decorators)
    }

    fn async_stmt_from(&mut self, start: u32, decorators: Vec<SyntaxNode>) -> PResult<SyntaxNode> {
        self.bump();
        if self.at_kw("def") {
            self.funcdef(start, decorators, true)
        } else if self.at_kw("for") && decorators.is_empty() {
            self.for_stmt(start, true)
        } else if self.at_kw("with") && decorators.is_empty() {
            self.with_stmt(start, true)
        } else {
            self.invalid()
        }
    }

    fn funcdef(&mut self, start: u32, decorators: Vec<SyntaxNode>, is_async: bool) -> PResult<SyntaxNode> {
        self.expect_kw("def")?;
        let name = self.ident()?.text;
        self.expect_op("(")?;
        let params = self.parameters(")", true)?;
        self.expect_op(")")?;
        let mut returns = None;
        let mut returns_node = None;
        if self.eat_op("->") {
            let r = self.test()?;
            returns = Some(annotation_of(&r));
            returns_node = Some(r);
        }
        self.expect_op(":")?;
        let body = self.block()?;
        let infos = params.iter().map(param_info).collect();
        let mut children = decorators;
        children.extend(params);
        children.extend(returns_node);
        children.extend(body);
        Ok(SyntaxNode::new(NodeKind::FunctionDef, self.span_from(start))
            .with_name(name)
            .with_attrs(NodeAttrs::FunctionDef { params: infos, returns, is_async })
            .with_children(children))
    }

    /// Parameter list up to (not including) `close`. `typed` allows annotations.
    fn parameters(&mut self, close: &str, typed: bool) -> PResult<Vec<SyntaxNode>> {
        let mut params: Vec<SyntaxNode> = Vec::new();
        let mut seen_slash = false;
        let mut seen_star = false;
        let mut bare_star: Option<Token> = None;
        let mut seen_default = false;
        let mut done = false;
        while !self.at_op(close) {
            if done {
                return self.err("arguments cannot follow var-keyword argument");
            }
            let t = self.cur().clone();
            if t.is_op("/") {
                if seen_slash || seen_star || params.is_empty() {
                    return self.invalid();
                }
                self.bump();
                seen_slash = true;
                for p in &mut params {
                    if let NodeAttrs::Parameter { kind, .. } = &mut p.attrs {
                        *kind = ParamKind::PositionalOnly;
                    }
                }
            } else if t.is_op("*") {
                if seen_star {
                    return self.err("* argument may appear only once");
                }
                self.bump();
                seen_star = true;
                if self.at_op(",") || self.at_op(close) {
                    bare_star = Some(t);
                } else {
                    params.push(self.param(ParamKind::VarArgs, typed, false)?);
                }
            } else if t.is_op("**") {
                self.bump();
                params.push(self.param(ParamKind::VarKeywords, typed, false)?);
                done = true;
            } else {
                let kind = if seen_star { ParamKind::KeywordOnly } else { ParamKind::Regular };
                let p = self.param(kind, typed, true)?;
                let has_default = matches!(p.attrs, NodeAttrs::Parameter { has_default: true, .. });
                if kind == ParamKind::KeywordOnly {
                    bare_star = None;
                } else if has_default {
                    seen_default = true;
                } else if seen_default {
                    return Err(self.fail_at(&t, "non-default argument follows default argument"));
                }
                params.push(p);
            }
            if !self.at_op(close) {
                self.expect_op(",")?;
            }
        }
        if let Some(t) = bare_star {
            return Err(self.fail_at(&t, "named arguments must follow bare *"));
        }
        Ok(params)
    }

    fn param(&mut self, kind: ParamKind, typed: bool, allow_default: bool) -> PResult<SyntaxNode> {
        let name_tok = self.ident()?;
        let start = name_tok.line;
        let mut children = Vec::new();
        let mut annotation = None;
        if typed && self.eat_op(":") {
            let ann = self.test()?;
            annotation = Some(annotation_of(&ann));
            children.push(ann);
        }
        let mut has_default = false;
        if allow_default && self.eat_op("=") {
            children.push(self.test()?);
            has_default = true;
        }
        Ok(SyntaxNode::new(NodeKind::Parameter, self.span_from(start))
            .with_name(name_tok.text)
            .with_attrs(NodeAttrs::Parameter { kind, annotation, has_default })
            .with_children(children))
    }

    fn classdef(&mut self, start: u32, decorators: Vec<SyntaxNode>) -> PResult<SyntaxNode> {
        self.expect_kw("class")?;
        let name = self.ident()?.text;
        let mut children = decorators;
        if self.eat_op("(") {
            let (pos, kws) = self.call_args()?;
            self.expect_op(")")?;
            children.extend(pos);
            children.extend(kws);
        }
        self.expect_op(":")?;
        children.extend(self.block()?);
        Ok(SyntaxNode::new(NodeKind::ClassDef, self.span_from(start)).with_name(name).with_children(children))
    }

    fn if_stmt(&mut self) -> PResult<SyntaxNode> {
        let start = self.bump().line;
        let mut children = vec![self.named_expr()?];
        self.expect_op(":")?;
        children.extend(self.block()?);
        if self.at_kw("elif") {
            children.push(self.if_stmt()?);
        } else if self.eat_kw("else") {
            self.expect_op(":")?;
            children.extend(self.block()?);
        }
        Ok(self.other(OtherKind::If, start, children))
    }

    fn while_stmt(&mut self) -> PResult<SyntaxNode> {
        let start = self.bump().line;
        let mut children = vec![self.named_expr()?];
        self.expect_op(":")?;
        children.extend(self.block()?);
        if self.eat_kw("else") {
            self.expect_op(":")?;
            children.extend(self.block()?);
        }
        Ok(self.other(OtherKind::While, start, children))
    }

    fn for_stmt(&mut self, start: u32, _is_async: bool) -> PResult<SyntaxNode> {
        self.expect_kw("for")?;
        let target = self.target_list()?;
        self.check_target(&target, TargetCtx::For, start)?;
        self.expect_kw("in")?;
        let iter = self.star_expressions()?;
        self.expect_op(":")?;
        let mut children = vec![target, iter];
        children.extend(self.block()?);
        if self.eat_kw("else") {
            self.expect_op(":")?;
            children.extend(self.block()?);
        }
        Ok(self.other(OtherKind::For, start, children))
    }

    fn try_stmt(&mut self) -> PResult<SyntaxNode> {
        let start = self.bump().line;
        self.expect_op(":")?;
        let mut children = self.block()?;
        let mut handlers = 0;
        while self.at_kw("except") {
            let hstart = self.bump().line;
            let mut hchildren = Vec::new();
            if !self.at_op(":") {
                hchildren.push(self.test()?);
                if self.at_op(",") {
                    return self.err("multiple exception types must be parenthesized");
                }
                if self.eat_kw("as") {
                    self.ident()?;
                }
            }
            self.expect_op(":")?;
            hchildren.extend(self.block()?);
            children.push(self.other(OtherKind::ExceptHandler, hstart, hchildren));
            handlers += 1;
        }
        if handlers > 0 && self.eat_kw("else") {
            self.expect_op(":")?;
            children.extend(self.block()?);
        }
        let mut has_finally = false;
        if self.eat_kw("finally") {
            self.expect_op(":")?;
            children.extend(self.block()?);
            has_finally = true;
        }
        if handlers == 0 && !has_finally {
            return self.err("expected 'except' or 'finally' block");
        }
        Ok(self.other(OtherKind::Try, start, children))
    }

    fn with_stmt(&mut self, start: u32, _is_async: bool) -> PResult<SyntaxNode> {
        self.expect_kw("with")?;
        let mut items = None;
        if self.at_op("(") {
            let saved = self.save();
            match self.paren_with_items() {
                Ok(v) => items = Some(v),
                Err(_) => self.restore(saved),
            }
        }
        let items = match items {
            Some(v) => v,
            None => {
                let mut v = vec![self.with_item()?];
                while self.eat_op(",") {
                    v.push(self.with_item()?);
                }
                v
            }
        };
        self.expect_op(":")?;
        let mut children = items;
        children.extend(self.block()?);
        Ok(self.other(OtherKind::With, start, children))
    }

    fn paren_with_items(&mut self) -> PResult<Vec<SyntaxNode>> {
        self.expect_op("(")?;
        let mut v = vec![self.with_item()?];
        while self.eat_op(",") {
            if self.at_op(")") {
                break;
            }
            v.push(self.with_item()?);
        }
        self.expect_op(")")?;
        if !self.at_op(":") {
            return self.invalid();
        }
        Ok(v)
    }

    fn with_item(&mut self) -> PResult<SyntaxNode> {
        let start = self.cur().line;
        let mut children = vec![self.test()?];
        if self.eat_kw("as") {
            let target = self.target()?;
            self.check_target(&target, TargetCtx::With, start)?;
            children.push(target);
        }
        Ok(self.other(OtherKind::WithItem, start, children))
    }

    // ---- match ----

    fn try_match_stmt(&mut self) -> PResult<Option<SyntaxNode>> {
        let saved = self.save();
        let start = self.bump().line;
        let subject = match self.match_subject() {
            Ok(s) if self.at_op(":") && self.peek(1).kind == Tok::Newline => s,
            _ => {
                self.restore(saved);
                return Ok(None);
            }
        };
        self.bump();
        self.bump();
        if self.cur().kind != Tok::Indent {
            return self.err("expected an indented block");
        }
        self.bump();
        let mut children = vec![subject];
        while self.at_kw("case") {
            children.push(self.case_block()?);
        }
        if children.len() == 1 {
            return self.invalid();
        }
        if self.cur().kind != Tok::Dedent && self.cur().kind != Tok::End {
            return self.invalid();
        }
        if self.cur().kind == Tok::Dedent {
            self.bump();
        }
        Ok(Some(self.other(OtherKind::Match, start, children)))
    }

    fn match_subject(&mut self) -> PResult<SyntaxNode> {
        let start = self.cur().line;
        let first = self.star_named_expr()?;
        if !self.at_op(",") {
            if first.is_other(OtherKind::Starred) {
                return self.invalid();
            }
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_op(":") {
                break;
            }
            items.push(self.star_named_expr()?);
        }
        Ok(self.other(OtherKind::Tuple, start, items))
    }

    fn case_block(&mut self) -> PResult<SyntaxNode> {
        let start = self.bump().line;
        let mut children = vec![self.patterns()?];
        if self.eat_kw("if") {
            children.push(self.named_expr()?);
        }
        self.expect_op(":")?;
        children.extend(self.block()?);
        Ok(self.other(OtherKind::MatchCase, start, children))
    }

    fn patterns(&mut self) -> PResult<SyntaxNode> {
        let start = self.cur().line;
        let first = self.maybe_star_pattern()?;
        if !self.at_op(",") {
            if first.is_other(OtherKind::MatchStar) {
                return self.invalid();
            }
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_op(":") || self.at_kw("if") {
                break;
            }
            items.push(self.maybe_star_pattern()?);
        }
        Ok(self.other(OtherKind::MatchSequence, start, items))
    }

    fn maybe_star_pattern(&mut self) -> PResult<SyntaxNode> {
        if self.at_op("*") {
            let start = self.bump().line;
            self.ident()?;
            return Ok(self.other(OtherKind::MatchStar, start, Vec::new()));
        }
        self.pattern()
    }

    fn pattern(&mut self) -> PResult<SyntaxNode> {
        self.enter()?;
        let start = self.cur().line;
        let mut alts = vec![self.closed_pattern()?];
        while self.eat_op("|") {
            alts.push(self.closed_pattern()?);
        }
        let mut p = if alts.len() == 1 { alts.pop().unwrap() } else { self.other(OtherKind::MatchOr, start, alts) };
        if self.eat_kw("as") {
            let t = self.ident()?;
            if t.text == "_" {
                return Err(self.fail_at(&t, "cannot use '_' as a target"));
            }
            p = self.other(OtherKind::MatchAs, start, vec![p]);
        }
        self.leave();
        Ok(p)
    }

    fn closed_pattern(&mut self) -> PResult<SyntaxNode> {
        let t = self.cur().clone();
        let start = t.line;
        match t.kind {
            Tok::Number => {
                let v = self.signed_number()?;
                Ok(self.other(OtherKind::MatchValue, start, vec![v]))
            }
            Tok::Op if t.text == "-" => {
                let v = self.signed_number()?;
                Ok(self.other(OtherKind::MatchValue, start, vec![v]))
            }
            Tok::Str => {
                let v = self.strings()?;
                Ok(self.other(OtherKind::MatchValue, start, vec![v]))
            }
            Tok::Name if matches!(t.text.as_str(), "None" | "True" | "False") => {
                let v = self.atom()?;
                Ok(self.other(OtherKind::MatchSingleton, start, vec![v]))
            }
            Tok::Name => {
                let name = self.ident()?;
                let mut value = SyntaxNode::new(NodeKind::Name, Span::new(start, start)).with_name(name.text.clone());
                let dotted = self.at_op(".");
                while self.eat_op(".") {
                    let attr = self.ident()?;
                    value = SyntaxNode::new(NodeKind::Attribute, self.span_from(start))
                        .with_name(attr.text)
                        .with_children(vec![value]);
                }
                if self.at_op("(") {
                    return self.class_pattern(start, value);
                }
                if dotted {
                    return Ok(self.other(OtherKind::MatchValue, start, vec![value]));
                }
                Ok(self.other(OtherKind::MatchAs, start, Vec::new()))
            }
            Tok::Op if t.text == "(" => {
                self.bump();
                if self.eat_op(")") {
                    return Ok(self.other(OtherKind::MatchSequence, start, Vec::new()));
                }
                let first = self.maybe_star_pattern()?;
                if self.eat_op(")") {
                    if first.is_other(OtherKind::MatchStar) {
                        return Ok(self.other(OtherKind::MatchSequence, start, vec![first]));
                    }
                    return Ok(first);
                }
                let mut items = vec![first];
                while self.eat_op(",") {
                    if self.at_op(")") {
                        break;
                    }
                    items.push(self.maybe_star_pattern()?);
                }
                self.expect_op(")")?;
                Ok(self.other(OtherKind::MatchSequence, start, items))
            }
            Tok::Op if t.text == "[" => {
                self.bump();
                let mut items = Vec::new();
                while !self.at_op("]") {
                    items.push(self.maybe_star_pattern()?);
                    if !self.at_op("]") {
                        self.expect_op(",")?;
                    }
                }
                self.bump();
                Ok(self.other(OtherKind::MatchSequence, start, items))
            }
            Tok::Op if t.text == "{" => {
                self.bump();
                let mut items = Vec::new();
                let mut rest = false;
                while !self.at_op("}") {
                    if rest {
                        return self.invalid();
                    }
                    if self.eat_op("**") {
                        self.ident()?;
                        rest = true;
                    } else {
                        items.push(self.mapping_key()?);
                        self.expect_op(":")?;
                        items.push(self.pattern()?);
                    }
                    if !self.at_op("}") {
                        self.expect_op(",")?;
                    }
                }
                self.bump();
                Ok(self.other(OtherKind::MatchMapping, start, items))
            }
            _ => self.invalid(),
        }
    }

    fn mapping_key(&mut self) -> PResult<SyntaxNode> {
        let t = self.cur().clone();
        match t.kind {
            Tok::Number => self.signed_number(),
            Tok::Op if t.text == "-" => self.signed_number(),
            Tok::Str => self.strings(),
            Tok::Name if matches!(t.text.as_str(), "None" | "True" | "False") => self.atom(),
            Tok::Name => {
                let start = t.line;
                let name = self.ident()?;
                let mut value = SyntaxNode::new(NodeKind::Name, Span::new(start, start)).with_name(name.text);
                if !self.at_op(".") {
                    return self.invalid();
                }
                while self.eat_op(".") {
                    let attr = self.ident()?;
                    value = SyntaxNode::new(NodeKind::Attribute, self.span_from(start))
                        .with_name(attr.text)
                        .with_children(vec![value]);
                }
                Ok(value)
            }
            _ => self.invalid(),
        }
    }

    fn signed_number(&mut self) -> PResult<SyntaxNode> {
        let start = self.cur().line;
        let neg = self.eat_op("-");
        if self.cur().kind != Tok::Number {
            return self.invalid();
        }
        let mut n = self.atom()?;
        if neg {
            n = self.other(OtherKind::UnaryOp, start, vec![n]);
        }
        if self.at_op("+") || self.at_op("-") {
            self.bump();
            if self.cur().kind != Tok::Number {
                return self.invalid();
            }
            let imag = self.atom()?;
            if !matches!(imag.literal(), Some(Literal::Complex(_))) {
                return self.err("imaginary number required in complex literal");
            }
            n = self.other(OtherKind::BinOp, start, vec![n, imag]);
        }
        Ok(n)
    }

    fn class_pattern(&mut self, start: u32, cls: SyntaxNode) -> PResult<SyntaxNode> {
        self.expect_op("(")?;
        let mut children = vec![cls];
        let mut seen_kw = false;
        while !self.at_op(")") {
            if self.cur().kind == Tok::Name && self.peek(1).is_op("=") {
                let kstart = self.bump().line;
                self.bump();
                let p = self.pattern()?;
                children.push(self.other(OtherKind::MatchKeyword, kstart, vec![p]));
                seen_kw = true;
            } else {
                if seen_kw {
                    return self.err("positional patterns follow keyword patterns");
                }
                children.push(self.pattern()?);
            }
            if !self.at_op(")") {
                self.expect_op(",")?;
            }
        }
        self.bump();
        Ok(self.other(OtherKind::MatchClass, start, children))
    }

    // ---- simple statements ----

    fn simple_stmts(&mut self, out: &mut Vec<SyntaxNode>) -> PResult<()> {
        loop {
            out.push(self.simple_stmt()?);
            if self.eat_op(";") {
                if self.cur().kind == Tok::Newline {
                    break;
                }
                continue;
            }
            break;
        }
        self.expect_newline()
    }

    fn simple_stmt(&mut self) -> PResult<SyntaxNode> {
        let t = self.cur().clone();
        let start = t.line;
        if t.kind == Tok::Name {
            match t.text.as_str() {
                "pass" => {
                    self.bump();
                    return Ok(self.other(OtherKind::Pass, start, Vec::new()));
                }
                "break" => {
                    self.bump();
                    return Ok(self.other(OtherKind::Break, start, Vec::new()));
                }
                "continue" => {
                    self.bump();
                    return Ok(self.other(OtherKind::Continue, start, Vec::new()));
                }
                "return" => {
                    self.bump();
                    let mut children = Vec::new();
                    if !self.at_stmt_end() {
                        children.push(self.star_expressions()?);
                    }
                    return Ok(self.other(OtherKind::Return, start, children));
                }
                "raise" => {
                    self.bump();
                    let mut children = Vec::new();
                    if !self.at_stmt_end() {
                        children.push(self.test()?);
                        if self.eat_kw("from") {
                            children.push(self.test()?);
                        }
                    }
                    return Ok(self.other(OtherKind::Raise, start, children));
                }
                "global" | "nonlocal" => {
                    self.bump();
                    self.ident()?;
                    while self.eat_op(",") {
                        self.ident()?;
                    }
                    let what = if t.text == "global" { OtherKind::Global } else { OtherKind::Nonlocal };
                    return Ok(self.other(what, start, Vec::new()));
                }
                "del" => {
                    self.bump();
                    let mut children = Vec::new();
                    loop {
                        let target = self.bitor()?;
                        self.check_target(&target, TargetCtx::Delete, start)?;
                        children.push(target);
                        if !self.eat_op(",") || self.at_stmt_end() {
                            break;
                        }
                    }
                    return Ok(self.other(OtherKind::Delete, start, children));
                }
                "assert" => {
                    self.bump();
                    let mut children = vec![self.test()?];
                    if self.eat_op(",") {
                        children.push(self.test()?);
                    }
                    return Ok(self.other(OtherKind::Assert, start, children));
                }
                "import" => return self.import_stmt(),
                "from" => return self.import_from(),
                _ => {}
            }
        }
        self.expr_stmt()
    }

    fn at_stmt_end(&self) -> bool {
        self.cur().kind == Tok::Newline || self.at_op(";")
    }

    fn dotted_name(&mut self) -> PResult<String> {
        let mut name = self.ident()?.text;
        while self.eat_op(".") {
            name.push('.');
            name.push_str(&self.ident()?.text);
        }
        Ok(name)
    }

    fn import_stmt(&mut self) -> PResult<SyntaxNode> {
        let start = self.bump().line;
        let mut names = Vec::new();
        loop {
            let name = self.dotted_name()?;
            let asname = if self.eat_kw("as") { Some(self.ident()?.text) } else { None };
            names.push(ImportAlias { name, asname });
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(SyntaxNode::new(NodeKind::Import, self.span_from(start)).with_attrs(NodeAttrs::Import { names }))
    }

    fn import_from(&mut self) -> PResult<SyntaxNode> {
        let start = self.bump().line;
        let mut level = 0;
        loop {
            if self.eat_op(".") {
                level += 1;
            } else if self.eat_op("...") {
                level += 3;
            } else {
                break;
            }
        }
        let module = if self.at_kw("import") && level > 0 { None } else { Some(self.dotted_name()?) };
        self.expect_kw("import")?;
        let mut names = Vec::new();
        if self.eat_op("*") {
            names.push(ImportAlias { name: "*".into(), asname: None });
        } else {
            let paren = self.eat_op("(");
            loop {
                let name = self.ident()?.text;
                let asname = if self.eat_kw("as") { Some(self.ident()?.text) } else { None };
                names.push(ImportAlias { name, asname });
                if !self.eat_op(",") {
                    break;
                }
                if paren && self.at_op(")") {
                    break;
                }
                if !paren && self.at_stmt_end() {
                    return self.err("trailing comma not allowed without surrounding parentheses");
                }
            }
            if paren {
                self.expect_op(")")?;
            }
        }
        Ok(SyntaxNode::new(NodeKind::ImportFrom, self.span_from(start)).with_attrs(NodeAttrs::ImportFrom {
            module,
            level,
            names,
        }))
    }

    fn expr_stmt(&mut self) -> PResult<SyntaxNode> {
        let start = self.cur().line;
        let first = self.yield_or_star_expressions()?;
        if self.at_op(":") {
            self.bump();
            self.check_target(&first, TargetCtx::Annotated, start)?;
            let mut children = vec![first, self.test()?];
            if self.eat_op("=") {
                children.push(self.yield_or_star_expressions()?);
            }
            return Ok(self.other(OtherKind::AnnAssign, start, children));
        }
        let t = self.cur().clone();
        if t.kind == Tok::Op
            && t.text.len() >= 2
            && t.text.ends_with('=')
            && !matches!(t.text.as_str(), "==" | "<=" | ">=" | "!=" | ":=")
        {
            self.bump();
            self.check_target(&first, TargetCtx::AugAssign, start)?;
            let value = self.yield_or_star_expressions()?;
            return Ok(self.other(OtherKind::AugAssign, start, vec![first, value]));
        }
        if self.at_op("=") {
            let mut parts = vec![first];
            while self.eat_op("=") {
                parts.push(self.yield_or_star_expressions()?);
            }
            let value = parts.pop().unwrap();
            for target in &parts {
                self.check_target(target, TargetCtx::Assign, start)?;
            }
            let targets = parts.len();
            parts.push(value);
            return Ok(SyntaxNode::new(NodeKind::Assign, self.span_from(start))
                .with_attrs(NodeAttrs::Assign { targets })
                .with_children(parts));
        }
        if first.is_other(OtherKind::Starred) {
            return self.err("can't use starred expression here");
        }
        Ok(self.other(OtherKind::Expr, start, vec![first]))
    }

    fn check_target(&self, n: &SyntaxNode, ctx: TargetCtx, line: u32) -> PResult<()> {
        self.check_target_inner(n, ctx, line, false)
    }

    fn check_target_inner(&self, n: &SyntaxNode, ctx: TargetCtx, line: u32, in_seq: bool) -> PResult<()> {
        let fail = |msg: String| Err(ParseFailure { line: n.span.line_start.max(line), column: 1, message: msg });
        let bad = |n: &SyntaxNode| -> String {
            let desc = other_kind_desc(n);
            match ctx {
                TargetCtx::Delete => format!("cannot delete {desc}"),
                TargetCtx::AugAssign => format!("'{desc}' is an illegal expression for augmented assignment"),
                TargetCtx::Annotated => "illegal target for annotation".to_string(),
                _ => format!("cannot assign to {desc}"),
            }
        };
        match n.kind {
            NodeKind::Name | NodeKind::Attribute => Ok(()),
            _ => match n.other_kind() {
                Some(OtherKind::Subscript) => Ok(()),
                Some(OtherKind::Tuple) | Some(OtherKind::List) => match ctx {
                    TargetCtx::AugAssign => fail(bad(n)),
                    TargetCtx::Annotated => fail(format!(
                        "only single target (not {}) can be annotated",
                        if n.is_other(OtherKind::Tuple) { "tuple" } else { "list" }
                    )),
                    _ => {
                        for c in &n.children {
                            self.check_target_inner(c, ctx, line, true)?;
                        }
                        Ok(())
                    }
                },
                Some(OtherKind::Starred) if ctx != TargetCtx::Delete => {
                    if !in_seq {
                        return fail("starred assignment target must be in a list or tuple".into());
                    }
                    self.check_target_inner(&n.children[0], ctx, line, false)
                }
                _ => fail(bad(n)),
            },
        }
    }

    // ---- expressions ----

    fn yield_or_star_expressions(&mut self) -> PResult<SyntaxNode> {
        if self.at_kw("yield") {
            self.yield_expr()
        } else {
            self.star_expressions()
        }
    }

    fn yield_expr(&mut self) -> PResult<SyntaxNode> {
        let start = self.bump().line;
        if self.eat_kw("from") {
            let v = self.test()?;
            return Ok(self.other(OtherKind::YieldFrom, start, vec![v]));
        }
        let mut children = Vec::new();
        if !self.at_stmt_end() && !self.at_op(")") && !self.at_op("=") && !self.at_op("]") && !self.at_op("}") {
            children.push(self.star_expressions()?);
        }
        Ok(self.other(OtherKind::Yield, start, children))
    }

    /// Comma-separated expressions (with `*` items); a tuple when a comma appears.
    fn star_expressions(&mut self) -> PResult<SyntaxNode> {
        let start = self.cur().line;
        let first = self.star_expr_or_test()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if !self.starts_expr() {
                break;
            }
            items.push(self.star_expr_or_test()?);
        }
        Ok(self.other(OtherKind::Tuple, start, items))
    }

    fn star_expr_or_test(&mut self) -> PResult<SyntaxNode> {
        if self.at_op("*") {
            let start = self.bump().line;
            let v = self.bitor()?;
            return Ok(self.other(OtherKind::Starred, start, vec![v]));
        }
        self.test()
    }

    fn star_named_expr(&mut self) -> PResult<SyntaxNode> {
        if self.at_op("*") {
            let start = self.bump().line;
            let v = self.bitor()?;
            return Ok(self.other(OtherKind::Starred, start, vec![v]));
        }
        self.named_expr()
    }

    fn starts_expr(&self) -> bool {
        let t = self.cur();
        match t.kind {
            Tok::Name => {
                !is_keyword(&t.text)
                    || matches!(t.text.as_str(), "None" | "True" | "False" | "not" | "lambda" | "await")
            }
            Tok::Number | Tok::Str => true,
            Tok::Op => matches!(t.text.as_str(), "(" | "[" | "{" | "-" | "+" | "~" | "*" | "..."),
            _ => false,
        }
    }

    /// Target list for `for` and comprehensions: stops before `in`.
    fn target_list(&mut self) -> PResult<SyntaxNode> {
        let start = self.cur().line;
        let first = self.target()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_kw("in") || self.at_op("=") {
                break;
            }
            items.push(self.target()?);
        }
        Ok(self.other(OtherKind::Tuple, start, items))
    }

    fn target(&mut self) -> PResult<SyntaxNode> {
        if self.at_op("*") {
            let start = self.bump().line;
            let v = self.bitor()?;
            return Ok(self.other(OtherKind::Starred, start, vec![v]));
        }
        self.bitor()
    }

    fn named_expr(&mut self) -> PResult<SyntaxNode> {
        if self.cur().kind == Tok::Name && self.peek(1).is_op(":=") && !is_keyword(&self.cur().text) {
            let t = self.bump();
            self.bump();
            let target = SyntaxNode::new(NodeKind::Name, Span::new(t.line, t.line)).with_name(t.text);
            let value = self.test()?;
            return Ok(self.other(OtherKind::NamedExpr, t.line, vec![target, value]));
        }
        let e = self.test()?;
        if self.at_op(":=") {
            return self.err(format!("cannot use assignment expressions with {}", other_kind_desc(&e)));
        }
        Ok(e)
    }

    fn test(&mut self) -> PResult<SyntaxNode> {
        self.enter()?;
        let r = self.test_inner();
        self.leave();
        r
    }

    fn test_inner(&mut self) -> PResult<SyntaxNode> {
        if self.at_kw("lambda") {
            return self.lambda();
        }
        let start = self.cur().line;
        let body = self.or_test()?;
        if self.eat_kw("if") {
            let cond = self.or_test()?;
            if !self.at_kw("else") {
                return self.err("expected 'else' after 'if' expression");
            }
            self.bump();
            let orelse = self.test()?;
            return Ok(self.other(OtherKind::IfExp, start, vec![cond, body, orelse]));
        }
        Ok(body)
    }

    fn lambda(&mut self) -> PResult<SyntaxNode> {
        let start = self.bump().line;
        let mut children = self.parameters(":", false)?;
        self.expect_op(":")?;
        children.push(self.test()?);
        Ok(self.other(OtherKind::Lambda, start, children))
    }

    fn or_test(&mut self) -> PResult<SyntaxNode> {
        let start = self.cur().line;
        let first = self.and_test()?;
        if !self.at_kw("or") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_kw("or") {
            items.push(self.and_test()?);
        }
        Ok(self.other(OtherKind::BoolOp, start, items))
    }

    fn and_test(&mut self) -> PResult<SyntaxNode> {
        let start = self.cur().line;
        let first = self.not_test()?;
        if !self.at_kw("and") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_kw("and") {
            items.push(self.not_test()?);
        }
        Ok(self.other(OtherKind::BoolOp, start, items))
    }

    fn not_test(&mut self) -> PResult<SyntaxNode> {
        if self.at_kw("not") {
            self.enter()?;
            let start = self.bump().line;
            let v = self.not_test()?;
            self.leave();
            return Ok(self.other(OtherKind::UnaryOp, start, vec![v]));
        }
        self.comparison()
    }

    fn comp_op(&mut self) -> bool {
        let t = self.cur();
        if t.kind == Tok::Op && matches!(t.text.as_str(), "<" | ">" | "==" | ">=" | "<=" | "!=") {
            self.bump();
            return true;
        }
        if t.is_name("in") {
            self.bump();
            return true;
        }
        if t.is_name("not") && self.peek(1).is_name("in") {
            self.bump();
            self.bump();
            return true;
        }
        if t.is_name("is") {
            self.bump();
            self.eat_kw("not");
            return true;
        }
        false
    }

    fn comparison(&mut self) -> PResult<SyntaxNode> {
        let start = self.cur().line;
        let first = self.bitor()?;
        let mut items = vec![first];
        while self.comp_op() {
            items.push(self.bitor()?);
        }
        if items.len() == 1 {
            return Ok(items.pop().unwrap());
        }
        Ok(self.other(OtherKind::Compare, start, items))
    }

    fn binary_level(&mut self, ops: &[&str], next: fn(&mut Self) -> PResult<SyntaxNode>) -> PResult<SyntaxNode> {
        let start = self.cur().line;
        let mut left = next(self)?;
        while self.cur().kind == Tok::Op && ops.contains(&self.cur().text.as_str()) {
            self.bump();
            let right = next(self)?;
            left = self.other(OtherKind::BinOp, start, vec![left, right]);
        }
        Ok(left)
    }

    fn bitor(&mut self) -> PResult<SyntaxNode> {
        self.binary_level(&["|"], Self::bitxor)
    }

    fn bitxor(&mut self) -> PResult<SyntaxNode> {
        self.binary_level(&["^"], Self::bitand)
    }

    fn bitand(&mut self) -> PResult<SyntaxNode> {
        self.binary_level(&["&"], Self::shift)
    }

    fn shift(&mut self) -> PResult<SyntaxNode> {
        self.binary_level(&["<<", ">>"], Self::arith)
    }

    fn arith(&mut self) -> PResult<SyntaxNode> {
        self.binary_level(&["+", "-"], Self::term)
    }

    fn term(&mut self) -> PResult<SyntaxNode> {
        self.binary_level(&["*", "/", "//", "%", "@"], Self::factor)
    }

    fn factor(&mut self) -> PResult<SyntaxNode> {
        let t = self.cur();
        if t.kind == Tok::Op && matches!(t.text.as_str(), "+" | "-" | "~") {
            self.enter()?;
            let start = self.bump().line;
            let v = self.factor()?;
            self.leave();
            return Ok(self.other(OtherKind::UnaryOp, start, vec![v]));
        }
        self.power()
    }

    fn power(&mut self) -> PResult<SyntaxNode> {
        let start = self.cur().line;
        let base = if self.at_kw("await") {
            self.bump();
            let v = self.primary()?;
            self.other(OtherKind::Await, start, vec![v])
        } else {
            self.primary()?
        };
        if self.eat_op("**") {
            let exp = self.factor()?;
            return Ok(self.other(OtherKind::BinOp, start, vec![base, exp]));
        }
        Ok(base)
    }

    fn primary(&mut self) -> PResult<SyntaxNode> {
        let start = self.cur().line;
        let mut node = self.atom()?;
        loop {
            if self.eat_op(".") {
                let attr = self.ident()?;
                node = SyntaxNode::new(NodeKind::Attribute, self.span_from(start))
                    .with_name(attr.text)
                    .with_children(vec![node]);
            } else if self.eat_op("(") {
                let (args, kws) = self.call_args()?;
                self.expect_op(")")?;
                let positional = args.len();
                let mut children = vec![node];
                children.extend(args);
                children.extend(kws);
                node = SyntaxNode::new(NodeKind::Call, self.span_from(start))
                    .with_attrs(NodeAttrs::Call { positional })
                    .with_children(children);
            } else if self.eat_op("[") {
                let slice = self.slices()?;
                self.expect_op("]")?;
                node = self.other(OtherKind::Subscript, start, vec![node, slice]);
            } else {
                return Ok(node);
            }
        }
    }

    fn slices(&mut self) -> PResult<SyntaxNode> {
        let start = self.cur().line;
        let first = self.slice()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_op("]") {
                break;
            }
            items.push(self.slice()?);
        }
        Ok(self.other(OtherKind::Tuple, start, items))
    }

    fn slice(&mut self) -> PResult<SyntaxNode> {
        let start = self.cur().line;
        let mut parts = Vec::new();
        if !self.at_op(":") {
            let e = self.named_expr()?;
            if !self.at_op(":") {
                return Ok(e);
            }
            parts.push(e);
        }
        self.expect_op(":")?;
        if !self.at_op(":") && !self.at_op("]") && !self.at_op(",") {
            parts.push(self.test()?);
        }
        if self.eat_op(":") && !self.at_op("]") && !self.at_op(",") {
            parts.push(self.test()?);
        }
        Ok(self.other(OtherKind::Slice, start, parts))
    }

    /// Arguments between call parentheses: (positional, keywords).
    fn call_args(&mut self) -> PResult<(Vec<SyntaxNode>, Vec<SyntaxNode>)> {
        let mut args = Vec::new();
        let mut kws: Vec<SyntaxNode> = Vec::new();
        let mut seen_kw = false;
        let mut seen_dstar = false;
        let mut names = HashSet::new();
        let mut has_bare_genexp = false;
        let mut count = 0;
        while !self.at_op(")") {
            let t = self.cur().clone();
            count += 1;
            if t.is_op("*") {
                self.bump();
                if seen_dstar {
                    return Err(self.fail_at(&t, "iterable argument unpacking follows keyword argument unpacking"));
                }
                let v = self.test()?;
                args.push(self.other(OtherKind::Starred, t.line, vec![v]));
            } else if t.is_op("**") {
                self.bump();
                let v = self.test()?;
                kws.push(SyntaxNode::new(NodeKind::KeywordArg, self.span_from(t.line)).with_children(vec![v]));
                seen_dstar = true;
            } else if t.kind == Tok::Name && self.peek(1).is_op("=") {
                if is_keyword(&t.text) {
                    return Err(self.fail_at(&t, format!("cannot assign to {}", t.text)));
                }
                self.bump();
                self.bump();
                if !names.insert(t.text.clone()) {
                    return Err(self.fail_at(&t, format!("keyword argument repeated: {}", t.text)));
                }
                let v = self.test()?;
                kws.push(
                    SyntaxNode::new(NodeKind::KeywordArg, self.span_from(t.line))
                        .with_name(t.text)
                        .with_children(vec![v]),
                );
                seen_kw = true;
            } else {
                let mut v = self.named_expr()?;
                if self.at_op("=") {
                    return self.err("expression cannot contain assignment, perhaps you meant \"==\"?");
                }
                if self.at_kw("for") || self.at_kw("async") {
                    v = self.comprehension(OtherKind::GeneratorExp, t.line, vec![v])?;
                    has_bare_genexp = true;
                }
                if seen_dstar {
                    return Err(self.fail_at(&t, "positional argument follows keyword argument unpacking"));
                }
                if seen_kw {
                    return Err(self.fail_at(&t, "positional argument follows keyword argument"));
                }
                args.push(v);
            }
            if !self.at_op(")") {
                self.expect_op(",")?;
            }
        }
        if has_bare_genexp && count > 1 {
            return self.err("Generator expression must be parenthesized");
        }
        Ok((args, kws))
    }

    fn comprehension(&mut self, what: OtherKind, start: u32, mut children: Vec<SyntaxNode>) -> PResult<SyntaxNode> {
        while self.at_kw("for") || (self.at_kw("async") && self.peek(1).is_name("for")) {
            let cstart = self.cur().line;
            self.eat_kw("async");
            self.bump();
            let target = self.target_list()?;
            self.check_target(&target, TargetCtx::For, cstart)?;
            self.expect_kw("in")?;
            let mut parts = vec![target, self.or_test()?];
            while self.eat_kw("if") {
                parts.push(self.or_test()?);
            }
            children.push(self.other(OtherKind::Comprehension, cstart, parts));
        }
        Ok(self.other(what, start, children))
    }

    fn atom(&mut self) -> PResult<SyntaxNode> {
        let t = self.cur().clone();
        let start = t.line;
        match t.kind {
            Tok::Name => match t.text.as_str() {
                "None" | "True" | "False" => {
                    self.bump();
                    let value = match t.text.as_str() {
                        "None" => Literal::None,
                        "True" => Literal::Bool(true),
                        _ => Literal::Bool(false),
                    };
                    Ok(SyntaxNode::new(NodeKind::Constant, self.span_from(start))
                        .with_attrs(NodeAttrs::Constant { value }))
                }
                s if is_keyword(s) => self.invalid(),
                _ => {
                    self.bump();
                    Ok(SyntaxNode::new(NodeKind::Name, self.span_from(start)).with_name(t.text))
                }
            },
            Tok::Number => {
                self.bump();
                let value = number_literal(&t.text);
                Ok(SyntaxNode::new(NodeKind::Constant, self.span_from(start)).with_attrs(NodeAttrs::Constant { value }))
            }
            Tok::Str => self.strings(),
            Tok::Op => match t.text.as_str() {
                "..." => {
                    self.bump();
                    Ok(SyntaxNode::new(NodeKind::Constant, self.span_from(start))
                        .with_attrs(NodeAttrs::Constant { value: Literal::Ellipsis }))
                }
                "(" => self.paren_atom(),
                "[" => self.list_atom(),
                "{" => self.brace_atom(),
                _ => self.invalid(),
            },
            _ => self.invalid(),
        }
    }

    fn paren_atom(&mut self) -> PResult<SyntaxNode> {
        self.enter()?;
        let start = self.bump().line;
        let r = (|| {
            if self.eat_op(")") {
                return Ok(self.other(OtherKind::Tuple, start, Vec::new()));
            }
            if self.at_kw("yield") {
                let y = self.yield_expr()?;
                self.expect_op(")")?;
                return Ok(y);
            }
            let first = self.star_named_expr()?;
            if self.at_kw("for") || self.at_kw("async") {
                let g = self.comprehension(OtherKind::GeneratorExp, start, vec![first])?;
                self.expect_op(")")?;
                return Ok(g);
            }
            if self.eat_op(")") {
                if first.is_other(OtherKind::Starred) {
                    return Err(ParseFailure {
                        line: start,
                        column: 1,
                        message: "cannot use starred expression here".into(),
                    });
                }
                return Ok(first);
            }
            let mut items = vec![first];
            while self.eat_op(",") {
                if self.at_op(")") {
                    break;
                }
                items.push(self.star_named_expr()?);
            }
            self.expect_op(")")?;
            Ok(self.other(OtherKind::Tuple, start, items))
        })();
        self.leave();
        r
    }

    fn list_atom(&mut self) -> PResult<SyntaxNode> {
        self.enter()?;
        let start = self.bump().line;
        let r = (|| {
            if self.eat_op("]") {
                return Ok(self.other(OtherKind::List, start, Vec::new()));
            }
            let first = self.star_named_expr()?;
            if self.at_kw("for") || self.at_kw("async") {
                let c = self.comprehension(OtherKind::ListComp, start, vec![first])?;
                self.expect_op("]")?;
                return Ok(c);
            }
            let mut items = vec![first];
            while self.eat_op(",") {
                if self.at_op("]") {
                    break;
                }
                items.push(self.star_named_expr()?);
            }
            self.expect_op("]")?;
            Ok(self.other(OtherKind::List, start, items))
        })();
        self.leave();
        r
    }

    fn brace_atom(&mut self) -> PResult<SyntaxNode> {
        self.enter()?;
        let start = self.bump().line;
        let r = (|| {
            if self.eat_op("}") {
                return Ok(self.other(OtherKind::Dict, start, Vec::new()));
            }
            let first_dict_item = if self.at_op("**") {
                let s = self.bump().line;
                let v = self.bitor()?;
                Some(self.other(OtherKind::DictUnpack, s, vec![v]))
            } else {
                None
            };
            if let Some(item) = first_dict_item {
                return self.dict_rest(start, vec![item]);
            }
            let first = self.star_named_expr()?;
            if self.eat_op(":") {
                let value = self.test()?;
                if self.at_kw("for") || self.at_kw("async") {
                    let c = self.comprehension(OtherKind::DictComp, start, vec![first, value])?;
                    self.expect_op("}")?;
                    return Ok(c);
                }
                return self.dict_rest(start, vec![first, value]);
            }
            if self.at_kw("for") || self.at_kw("async") {
                let c = self.comprehension(OtherKind::SetComp, start, vec![first])?;
                self.expect_op("}")?;
                return Ok(c);
            }
            let mut items = vec![first];
            while self.eat_op(",") {
                if self.at_op("}") {
                    break;
                }
                items.push(self.star_named_expr()?);
            }
            self.expect_op("}")?;
            Ok(self.other(OtherKind::Set, start, items))
        })();
        self.leave();
        r
    }

    fn dict_rest(&mut self, start: u32, mut items: Vec<SyntaxNode>) -> PResult<SyntaxNode> {
        while self.eat_op(",") {
            if self.at_op("}") {
                break;
            }
            if self.at_op("**") {
                let s = self.bump().line;
                let v = self.bitor()?;
                items.push(self.other(OtherKind::DictUnpack, s, vec![v]));
            } else {
                items.push(self.test()?);
                self.expect_op(":")?;
                items.push(self.test()?);
            }
        }
        self.expect_op("}")?;
        Ok(self.other(OtherKind::Dict, start, items))
    }

    // ---- strings ----

    fn strings(&mut self) -> PResult<SyntaxNode> {
        let start = self.cur().line;
        let mut toks = Vec::new();
        while self.cur().kind == Tok::Str {
            toks.push(self.bump());
        }
        let is_bytes = |t: &Token| string_prefix(&t.text).contains('b');
        let any_bytes = toks.iter().any(is_bytes);
        if any_bytes && !toks.iter().all(is_bytes) {
            return Err(self.fail_at(&toks[0], "cannot mix bytes and nonbytes literals"));
        }
        let span = self.span_from(start);
        if any_bytes {
            let mut out = Vec::new();
            for t in &toks {
                let (prefix, body, _) = split_string(&t.text);
                let raw = prefix.contains('r');
                out.extend(decode_bytes(body, raw).map_err(|m| self.fail_at(t, m))?);
            }
            return Ok(SyntaxNode::new(NodeKind::Constant, span)
                .with_attrs(NodeAttrs::Constant { value: Literal::Bytes(out) }));
        }
        if !toks.iter().any(|t| string_prefix(&t.text).contains('f')) {
            let mut out = String::new();
            for t in &toks {
                let (prefix, body, _) = split_string(&t.text);
                out.push_str(&decode_str(body, prefix.contains('r')).map_err(|m| self.fail_at(t, m))?);
            }
            return Ok(
                SyntaxNode::new(NodeKind::Constant, span).with_attrs(NodeAttrs::Constant { value: Literal::Str(out) })
            );
        }
        let mut parts = Vec::new();
        let mut pending = String::new();
        for t in &toks {
            let (prefix, body, body_offset) = split_string(&t.text);
            let raw = prefix.contains('r');
            if prefix.contains('f') {
                let line = t.line + t.text[..body_offset].matches('\n').count() as u32;
                fstring_parts(body, raw, line, &mut pending, &mut parts, 0).map_err(|e| e.or_at(t))?;
            } else {
                pending.push_str(&decode_str(body, raw).map_err(|m| self.fail_at(t, m))?);
            }
        }
        flush_literal(&mut pending, &mut parts, span);
        Ok(SyntaxNode::other(OtherKind::JoinedStr, span, parts))
    }
}

trait OrAt {
    fn or_at(self, t: &Token) -> ParseFailure;
}

impl OrAt for ParseFailure {
    fn or_at(mut self, t: &Token) -> ParseFailure {
        if self.line == 0 {
            self.line = t.line;
            self.column = t.col.max(1);
        }
        self
    }
}

fn flush_literal(pending: &mut String, parts: &mut Vec<SyntaxNode>, span: Span) {
    if !pending.is_empty() {
        let value = Literal::Str(std::mem::take(pending));
        parts.push(SyntaxNode::new(NodeKind::Constant, span).with_attrs(NodeAttrs::Constant { value }));
    }
}

fn fail_line(line: u32, msg: impl Into<String>) -> ParseFailure {
    ParseFailure { line, column: 1, message: msg.into() }
}

/// Split an f-string body into literal text and replacement fields.
/// `line` is the source line where `body` begins.
fn fstring_parts(
    body: &str,
    raw: bool,
    line: u32,
    pending: &mut String,
    parts: &mut Vec<SyntaxNode>,
    nesting: u32,
) -> PResult<()> {
    if nesting > 1 {
        return Err(fail_line(line, "f-string: expressions nested too deeply"));
    }
    let chars: Vec<char> = body.chars().collect();
    let mut i = 0;
    let mut cur_line = line;
    let mut literal = String::new();
    while i < chars.len() {
        let c = chars[i];
        if c == '\\' && !raw && chars.get(i + 1) == Some(&'N') && chars.get(i + 2) == Some(&'{') {
            // named unicode escape: its braces are not a replacement field
            let close = chars[i..].iter().position(|&c| c == '}').map_or(chars.len(), |p| i + p + 1);
            literal.extend(&chars[i..close]);
            i = close;
            continue;
        }
        if c == '\\' && !raw && i + 1 < chars.len() && chars[i + 1] != '{' && chars[i + 1] != '}' {
            literal.push(c);
            literal.push(chars[i + 1]);
            if chars[i + 1] == '\n' {
                cur_line += 1;
            }
            i += 2;
            continue;
        }
        if c == '{' {
            if chars.get(i + 1) == Some(&'{') {
                literal.push('{');
                i += 2;
                continue;
            }
            pending.push_str(&decode_str(&literal, raw).map_err(|m| fail_line(cur_line, m))?);
            literal.clear();
            let field_line = cur_line;
            let (end, field) = scan_field(&chars, i + 1, field_line)?;
            let nl = chars[i..end].iter().filter(|&&c| c == '\n').count() as u32;
            let field_span = Span::new(field_line, field_line + nl);
            flush_literal(pending, parts, field_span);
            let expr = parse_fstring_expr(&field.expr, field_line)?;
            let mut fchildren = vec![expr];
            if let Some(spec) = field.spec {
                let mut spec_parts = Vec::new();
                let mut spec_pending = String::new();
                fstring_parts(&spec, raw, field.spec_line, &mut spec_pending, &mut spec_parts, nesting + 1)?;
                flush_literal(&mut spec_pending, &mut spec_parts, field_span);
                fchildren.push(SyntaxNode::other(OtherKind::JoinedStr, field_span, spec_parts));
            }
            if field.debug {
                pending.push_str(&field.expr);
                pending.push('=');
            }
            parts.push(SyntaxNode::other(OtherKind::FormattedValue, field_span, fchildren));
            cur_line += nl;
            i = end;
        } else if c == '}' {
            if chars.get(i + 1) == Some(&'}') {
                literal.push('}');
                i += 2;
                continue;
            }
            return Err(fail_line(cur_line, "f-string: single '}' is not allowed"));
        } else {
            if c == '\n' {
                cur_line += 1;
            }
            literal.push(c);
            i += 1;
        }
    }
    pending.push_str(&decode_str(&literal, raw).map_err(|m| fail_line(cur_line, m))?);
    Ok(())
}

struct Field {
    expr: String,
    spec: Option<String>,
    spec_line: u32,
    debug: bool,
}

/// Scan a replacement field starting just after `{`; returns the index after the closing `}`.
fn scan_field(chars: &[char], mut i: usize, line: u32) -> PResult<(usize, Field)> {
    let start = i;
    let mut depth = 0i32;
    let mut quote: Option<char> = None;
    let mut expr_end = None;
    let mut cur_line = line;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            cur_line += 1;
        }
        if let Some(q) = quote {
            if c == '\\' {
                i += 2;
                continue;
            }
            if c == q {
                quote = None;
            }
            i += 1;
            continue;
        }
        match c {
            '\'' | '"' => quote = Some(c),
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' if depth > 0 => depth -= 1,
            '}' | ':' if depth == 0 => {
                expr_end = Some(i);
                break;
            }
            '!' if depth == 0 && chars.get(i + 1) != Some(&'=') => {
                expr_end = Some(i);
                break;
            }
            '#' => return Err(fail_line(cur_line, "f-string expression part cannot include '#'")),
            _ => {}
        }
        i += 1;
    }
    let Some(mut end) = expr_end else {
        return Err(fail_line(line, "f-string: expecting '}'"));
    };
    let mut expr: String = chars[start..end].iter().collect();
    let mut debug = false;
    let trimmed = expr.trim_end();
    if trimmed.ends_with('=')
        && !trimmed.ends_with("==")
        && !trimmed.ends_with("!=")
        && !trimmed.ends_with("<=")
        && !trimmed.ends_with(">=")
    {
        debug = true;
        let cut = trimmed.len() - 1;
        expr.truncate(cut);
    }
    if expr.trim().is_empty() {
        return Err(fail_line(line, "f-string: empty expression not allowed"));
    }
    if chars[end] == '!' {
        let conv = chars.get(end + 1).copied();
        if !matches!(conv, Some('r' | 's' | 'a')) {
            return Err(fail_line(line, "f-string: invalid conversion character: expected 's', 'r', or 'a'"));
        }
        end += 2;
        if !matches!(chars.get(end), Some('}' | ':')) {
            return Err(fail_line(line, "f-string: expecting '}'"));
        }
    }
    let mut spec = None;
    let mut spec_line = cur_line;
    if chars[end] == ':' {
        spec_line = line + chars[start..end].iter().filter(|&&c| c == '\n').count() as u32;
        let s = end + 1;
        let mut j = s;
        let mut d = 0;
        while j < chars.len() {
            match chars[j] {
                '{' => d += 1,
                '}' if d == 0 => break,
                '}' => d -= 1,
                _ => {}
            }
            j += 1;
        }
        if j >= chars.len() {
            return Err(fail_line(line, "f-string: expecting '}'"));
        }
        spec = Some(chars[s..j].iter().collect());
        end = j;
    }
    Ok((end + 1, Field { expr, spec, spec_line, debug }))
}

fn parse_fstring_expr(expr: &str, line: u32) -> PResult<SyntaxNode> {
    let wrapped = format!("({expr})");
    let shift = |mut e: ParseFailure| {
        e.line += line - 1;
        e.message = format!("f-string: {}", e.message);
        e
    };
    let mut toks = tokenize(&wrapped).map_err(shift)?;
    for t in &mut toks {
        t.line += line - 1;
        t.end_line += line - 1;
    }
    let mut p = Parser::new(toks);
    p.last_end = line;
    let node = p.paren_atom().map_err(|e| ParseFailure { message: format!("f-string: {}", e.message), ..e })?;
    if p.cur().kind != Tok::Newline {
        return Err(fail_line(line, "f-string: invalid syntax"));
    }
    Ok(node)
}

fn string_prefix(text: &str) -> String {
    text.chars().take_while(|c| *c != '\'' && *c != '"').collect::<String>().to_ascii_lowercase()
}

/// (lowercased prefix, body without quotes, byte offset of body)
fn split_string(text: &str) -> (String, &str, usize) {
    let prefix = string_prefix(text);
    let rest = &text[prefix.len()..];
    let q = if rest.starts_with("\"\"\"") || rest.starts_with("'''") { 3 } else { 1 };
    let body = &rest[q..rest.len() - q];
    (prefix.clone(), body, prefix.len() + q)
}

fn number_literal(text: &str) -> Literal {
    let clean: String = text.chars().filter(|&c| c != '_').collect();
    let lower = clean.to_ascii_lowercase();
    if let Some(imag) = lower.strip_suffix('j') {
        return Literal::Complex(float_value(imag));
    }
    let is_radix = lower.starts_with("0x") || lower.starts_with("0o") || lower.starts_with("0b");
    if !is_radix && (lower.contains('.') || lower.contains('e')) {
        return Literal::Float(float_value(&lower));
    }
    Literal::Int(int_to_decimal(&lower))
}

fn annotation_of(n: &SyntaxNode) -> Annotation {
    match n.dotted_name() {
        Some(name) => Annotation::Name(name),
        None => Annotation::Complex,
    }
}

fn param_info(p: &SyntaxNode) -> ParamInfo {
    match &p.attrs {
        NodeAttrs::Parameter { kind, annotation, has_default } => ParamInfo {
            name: p.name.clone().unwrap_or_default(),
            kind: *kind,
            annotation: annotation.clone(),
            has_default: *has_default,
        },
        _ => unreachable!("parameter nodes carry parameter attrs"),
    }
}
