//! Declarative structural assertions over parsed Python files.

mod eval;
mod schema;

use std::collections::{BTreeMap, HashMap};
use std::io;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use eval::{check_tree, evaluate_assertion, run_suite, CheckVerdict};
pub use schema::{load_suite, SchemaError, SUITE_SCHEMA_VERSION};

use crate::pytree::{Literal, ParseFailure};

/// Argument / value shape test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Matcher {
    /// Satisfied when any member is.
    AnyOf(Vec<Matcher>),
    One(Shape),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Any,
    /// A bare name; any identifier unless `name` is given.
    IsName {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    IsAttribute {
        attr: String,
    },
    IsConstant {
        value: ConstValue,
    },
}

/// A literal as written in a suite document. Comparison is type-strict:
/// `true` never equals `1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstValue {
    None(()),
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl ConstValue {
    pub fn matches(&self, lit: &Literal) -> bool {
        match (self, lit) {
            (ConstValue::None(()), Literal::None) => true,
            (ConstValue::Bool(a), Literal::Bool(b)) => a == b,
            (ConstValue::Int(a), Literal::Int(b)) => a.to_string() == *b,
            (ConstValue::Float(a), Literal::Float(b)) => a == b,
            (ConstValue::Str(a), Literal::Str(b)) => a == b,
            _ => false,
        }
    }
}

/// Enclosing definition(s) a search is confined to.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scope {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
}

impl Scope {
    pub fn is_empty(&self) -> bool {
        self.class.is_none() && self.function.is_none()
    }
}

/// One expected positional parameter; unset fields are unconstrained.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    pub fn items(&self) -> Vec<&str> {
        match self {
            OneOrMany::One(s) => vec![s.as_str()],
            OneOrMany::Many(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

/// The predicate an assertion applies to its file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Check {
    FileExists,
    ClassDefined {
        class: String,
    },
    DefinitionAbsent {
        name: String,
    },
    UsageAbsent {
        name: String,
    },
    SelfAttrAssigned {
        class: String,
        attr: OneOrMany,
    },
    FunctionSignature {
        function: String,
        params: Vec<ParamSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        returns: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scope: Option<Scope>,
    },
    MethodDefined {
        class: String,
        method: String,
    },
    CallArgMatches {
        callee: String,
        #[serde(default)]
        arg_index: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        arg_count: Option<usize>,
        matcher: Matcher,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scope: Option<Scope>,
    },
    CallKeyword {
        callee: String,
        keyword: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matcher: Option<Matcher>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scope: Option<Scope>,
    },
    /// `module` may start with dots for a relative import.
    ImportsFrom {
        module: String,
        names: Vec<String>,
    },
    ImportAbsent {
        module: String,
        name: String,
    },
}

impl Check {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Check::FileExists => "file_exists",
            Check::ClassDefined { .. } => "class_defined",
            Check::DefinitionAbsent { .. } => "definition_absent",
            Check::UsageAbsent { .. } => "usage_absent",
            Check::SelfAttrAssigned { .. } => "self_attr_assigned",
            Check::FunctionSignature { .. } => "function_signature",
            Check::MethodDefined { .. } => "method_defined",
            Check::CallArgMatches { .. } => "call_arg_matches",
            Check::CallKeyword { .. } => "call_keyword",
            Check::ImportsFrom { .. } => "imports_from",
            Check::ImportAbsent { .. } => "import_absent",
        }
    }

    /// Kinds asserting that something is *not* present.
    pub fn is_negative(&self) -> bool {
        matches!(self, Check::DefinitionAbsent { .. } | Check::UsageAbsent { .. } | Check::ImportAbsent { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub id: String,
    pub path: String,
    #[serde(flatten)]
    pub check: Check,
    /// Overrides the default message; `{file}` is the basename, `{path}` the full path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionSuite {
    pub schema_version: u32,
    pub task_id: String,
    pub assertions: Vec<Assertion>,
}

impl AssertionSuite {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("suite serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

/// Which unittest-style assertion a failure corresponds to; drives report wording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    IsTrue,
    IsFalse,
    IsNotNone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionOutcome {
    pub id: String,
    pub status: Status,
    /// Empty for a pass.
    pub message: String,
    pub expectation: Expectation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_failure: Option<ParseFailure>,
}

impl AssertionOutcome {
    pub fn pass(id: &str) -> Self {
        AssertionOutcome {
            id: id.to_string(),
            status: Status::Pass,
            message: String::new(),
            expectation: Expectation::IsTrue,
            parse_failure: None,
        }
    }

    pub fn error(id: &str, message: impl Into<String>) -> Self {
        AssertionOutcome {
            id: id.to_string(),
            status: Status::Error,
            message: message.into(),
            expectation: Expectation::IsTrue,
            parse_failure: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

/// Read access to a repository tree by repo-relative path.
pub trait SourceFiles {
    /// `Ok(None)` when the file does not exist.
    fn read_file(&self, rel: &str) -> io::Result<Option<Vec<u8>>>;
}

/// Normalize a repo-relative path; `None` if it is absolute or escapes the root.
pub fn clean_rel_path(rel: &str) -> Option<PathBuf> {
    let mut out = PathBuf::new();
    for c in Path::new(rel).components() {
        match c {
            Component::Normal(p) => out.push(p),
            Component::CurDir => {}
            _ => return None,
        }
    }
    (!out.as_os_str().is_empty()).then_some(out)
}

impl SourceFiles for Path {
    fn read_file(&self, rel: &str) -> io::Result<Option<Vec<u8>>> {
        let Some(clean) = clean_rel_path(rel) else { return Ok(None) };
        let full = self.join(clean);
        if !full.is_file() {
            return Ok(None);
        }
        std::fs::read(full).map(Some)
    }
}

impl SourceFiles for PathBuf {
    fn read_file(&self, rel: &str) -> io::Result<Option<Vec<u8>>> {
        self.as_path().read_file(rel)
    }
}

impl SourceFiles for BTreeMap<String, Vec<u8>> {
    fn read_file(&self, rel: &str) -> io::Result<Option<Vec<u8>>> {
        Ok(self.get(rel).cloned())
    }
}

impl SourceFiles for HashMap<String, Vec<u8>> {
    fn read_file(&self, rel: &str) -> io::Result<Option<Vec<u8>>> {
        Ok(self.get(rel).cloned())
    }
}

impl<T: SourceFiles + ?Sized> SourceFiles for &T {
    fn read_file(&self, rel: &str) -> io::Result<Option<Vec<u8>>> {
        (**self).read_file(rel)
    }
}

/// Basename used for `{file}` in messages.
pub fn basename(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}
