use std::fmt;

use serde::{Deserialize, Serialize};

/// Node categories understood by the assertion engine. Everything else in the
/// grammar is [`NodeKind::Other`] with its children preserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Module,
    ClassDef,
    FunctionDef,
    Assign,
    Attribute,
    Name,
    Call,
    KeywordArg,
    ImportFrom,
    Import,
    Constant,
    Parameter,
    Other,
}

impl NodeKind {
    pub const ALL: [NodeKind; 13] = [
        NodeKind::Module,
        NodeKind::ClassDef,
        NodeKind::FunctionDef,
        NodeKind::Assign,
        NodeKind::Attribute,
        NodeKind::Name,
        NodeKind::Call,
        NodeKind::KeywordArg,
        NodeKind::ImportFrom,
        NodeKind::Import,
        NodeKind::Constant,
        NodeKind::Parameter,
        NodeKind::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Module => "Module",
            NodeKind::ClassDef => "ClassDef",
            NodeKind::FunctionDef => "FunctionDef",
            NodeKind::Assign => "Assign",
            NodeKind::Attribute => "Attribute",
            NodeKind::Name => "Name",
            NodeKind::Call => "Call",
            NodeKind::KeywordArg => "KeywordArg",
            NodeKind::ImportFrom => "ImportFrom",
            NodeKind::Import => "Import",
            NodeKind::Constant => "Constant",
            NodeKind::Parameter => "Parameter",
            NodeKind::Other => "Other",
        }
    }

    /// Kinds whose `name` must be a non-empty identifier.
    pub fn requires_name(self) -> bool {
        matches!(self, NodeKind::ClassDef | NodeKind::FunctionDef | NodeKind::Name | NodeKind::Parameter)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Grammar constructs folded into [`NodeKind::Other`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OtherKind {
    // statements
    Expr,
    AugAssign,
    AnnAssign,
    Return,
    Raise,
    Pass,
    Break,
    Continue,
    Delete,
    Global,
    Nonlocal,
    Assert,
    If,
    For,
    While,
    Try,
    ExceptHandler,
    With,
    WithItem,
    Match,
    MatchCase,
    // expressions
    BoolOp,
    BinOp,
    UnaryOp,
    Compare,
    IfExp,
    Lambda,
    Await,
    Yield,
    YieldFrom,
    NamedExpr,
    Subscript,
    Slice,
    Starred,
    Tuple,
    List,
    Set,
    Dict,
    DictUnpack,
    ListComp,
    SetComp,
    DictComp,
    GeneratorExp,
    Comprehension,
    JoinedStr,
    FormattedValue,
    // match patterns
    MatchValue,
    MatchSingleton,
    MatchSequence,
    MatchMapping,
    MatchClass,
    MatchKeyword,
    MatchStar,
    MatchAs,
    MatchOr,
}

/// Literal payload of a [`NodeKind::Constant`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Literal {
    Str(String),
    Bytes(Vec<u8>),
    /// Integer literal, normalized to decimal text (Python ints are unbounded).
    Int(String),
    Float(f64),
    Complex(f64),
    Bool(bool),
    None,
    Ellipsis,
}

/// A captured annotation: a dotted name, or an opaque marker for anything else.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Annotation {
    Name(String),
    Complex,
}

impl Annotation {
    pub fn as_name(&self) -> Option<&str> {
        match self {
            Annotation::Name(n) => Some(n),
            Annotation::Complex => None,
        }
    }
}

impl fmt::Display for Annotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Annotation::Name(n) => f.write_str(n),
            Annotation::Complex => f.write_str("<complex>"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    PositionalOnly,
    Regular,
    VarArgs,
    KeywordOnly,
    VarKeywords,
}

impl ParamKind {
    pub fn is_positional(self) -> bool {
        matches!(self, ParamKind::PositionalOnly | ParamKind::Regular)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub kind: ParamKind,
    pub annotation: Option<Annotation>,
    pub has_default: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportAlias {
    pub name: String,
    pub asname: Option<String>,
}

/// Kind-specific payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "attrs", rename_all = "snake_case")]
pub enum NodeAttrs {
    None,
    ImportFrom {
        /// Module path without the leading dots.
        module: Option<String>,
        level: u32,
        names: Vec<ImportAlias>,
    },
    Import {
        names: Vec<ImportAlias>,
    },
    FunctionDef {
        params: Vec<ParamInfo>,
        returns: Option<Annotation>,
        is_async: bool,
    },
    Parameter {
        kind: ParamKind,
        annotation: Option<Annotation>,
        has_default: bool,
    },
    Constant {
        value: Literal,
    },
    /// Children are laid out as `[func, positional.., keywords..]`.
    Call {
        positional: usize,
    },
    /// Children are laid out as `[targets.., value]`.
    Assign {
        targets: usize,
    },
    Other {
        what: OtherKind,
    },
}

/// Inclusive 1-based line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub line_start: u32,
    pub line_end: u32,
}

impl Span {
    pub fn new(line_start: u32, line_end: u32) -> Self {
        Span { line_start, line_end }
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.line_start <= other.line_start && other.line_end <= self.line_end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntaxNode {
    pub kind: NodeKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub name: Option<String>,
    pub span: Span,
    #[serde(flatten)]
    pub attrs: NodeAttrs,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub children: Vec<SyntaxNode>,
}

impl SyntaxNode {
    pub fn new(kind: NodeKind, span: Span) -> Self {
        SyntaxNode { kind, name: None, span, attrs: NodeAttrs::None, children: Vec::new() }
    }

    pub fn other(what: OtherKind, span: Span, children: Vec<SyntaxNode>) -> Self {
        SyntaxNode { kind: NodeKind::Other, name: None, span, attrs: NodeAttrs::Other { what }, children }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn with_attrs(mut self, attrs: NodeAttrs) -> Self {
        self.attrs = attrs;
        self
    }

    pub fn with_children(mut self, children: Vec<SyntaxNode>) -> Self {
        self.children = children;
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn is(&self, kind: NodeKind, name: &str) -> bool {
        self.kind == kind && self.name.as_deref() == Some(name)
    }

    pub fn other_kind(&self) -> Option<OtherKind> {
        match self.attrs {
            NodeAttrs::Other { what } => Some(what),
            _ => None,
        }
    }

    pub fn is_other(&self, what: OtherKind) -> bool {
        self.other_kind() == Some(what)
    }

    /// Preorder iterator over this node and all of its descendants.
    pub fn walk(&self) -> Walk<'_> {
        Walk { stack: vec![self] }
    }

    pub fn count(&self) -> usize {
        self.walk().count()
    }

    pub fn literal(&self) -> Option<&Literal> {
        match &self.attrs {
            NodeAttrs::Constant { value } => Some(value),
            _ => None,
        }
    }

    /// The callee expression of a Call.
    pub fn call_func(&self) -> Option<&SyntaxNode> {
        match self.attrs {
            NodeAttrs::Call { .. } => self.children.first(),
            _ => None,
        }
    }

    pub fn call_args(&self) -> &[SyntaxNode] {
        match self.attrs {
            NodeAttrs::Call { positional } => &self.children[1..1 + positional],
            _ => &[],
        }
    }

    pub fn call_keywords(&self) -> &[SyntaxNode] {
        match self.attrs {
            NodeAttrs::Call { positional } => &self.children[1 + positional..],
            _ => &[],
        }
    }

    /// Identifier of the callee when it is a bare name, e.g. `gunzip` in `gunzip(x)`.
    pub fn callee_name(&self) -> Option<&str> {
        self.call_func().filter(|f| f.kind == NodeKind::Name).and_then(|f| f.name())
    }

    pub fn assign_targets(&self) -> &[SyntaxNode] {
        match self.attrs {
            NodeAttrs::Assign { targets } => &self.children[..targets],
            _ => &[],
        }
    }

    /// Value expression of a KeywordArg.
    pub fn keyword_value(&self) -> Option<&SyntaxNode> {
        (self.kind == NodeKind::KeywordArg).then(|| self.children.first()).flatten()
    }

    /// Dotted rendering of a Name / Attribute chain (`a.b.c`), if the expression is one.
    pub fn dotted_name(&self) -> Option<String> {
        match self.kind {
            NodeKind::Name => self.name.clone(),
            NodeKind::Attribute => {
                let base = self.children.first()?.dotted_name()?;
                Some(format!("{base}.{}", self.name.as_deref()?))
            }
            _ => None,
        }
    }
}

pub struct Walk<'a> {
    stack: Vec<&'a SyntaxNode>,
}

impl<'a> Iterator for Walk<'a> {
    type Item = &'a SyntaxNode;

    fn next(&mut self) -> Option<Self::Item> {
        let node = self.stack.pop()?;
        self.stack.extend(node.children.iter().rev());
        Some(node)
    }
}

/// A parsed source file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntaxTree {
    pub path: String,
    pub root: SyntaxNode,
}

impl SyntaxTree {
    pub fn walk(&self) -> Walk<'_> {
        self.root.walk()
    }

    pub fn find_all(&self, kind: NodeKind, name: Option<&str>) -> Vec<&SyntaxNode> {
        find_all_in(&self.root, kind, name)
    }

    pub fn node_count(&self) -> usize {
        self.root.count()
    }
}

/// Nodes under (and including) `root` matching `kind` and, if given, `name`, in walk order.
pub fn find_all_in<'a>(root: &'a SyntaxNode, kind: NodeKind, name: Option<&str>) -> Vec<&'a SyntaxNode> {
    root.walk().filter(|n| n.kind == kind && name.is_none_or(|want| n.name() == Some(want))).collect()
}
