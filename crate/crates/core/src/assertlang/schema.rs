use std::collections::HashSet;

use serde_json::Value;

use super::{clean_rel_path, Assertion, AssertionSuite, Check, Matcher, Shape};

pub const SUITE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{location}: {reason}")]
pub struct SchemaError {
    /// JSON-path-like pointer, e.g. `assertions[2].class`.
    pub location: String,
    pub reason: String,
}

fn err(location: impl Into<String>, reason: impl Into<String>) -> SchemaError {
    SchemaError { location: location.into(), reason: reason.into() }
}

const COMMON: &[&str] = &["id", "kind", "path", "failure_message"];

/// (kind, mandatory params, optional params)
const KINDS: &[(&str, &[&str], &[&str])] = &[
    ("file_exists", &[], &[]),
    ("class_defined", &["class"], &[]),
    ("definition_absent", &["name"], &[]),
    ("usage_absent", &["name"], &[]),
    ("self_attr_assigned", &["class", "attr"], &[]),
    ("function_signature", &["function", "params"], &["returns", "scope"]),
    ("method_defined", &["class", "method"], &[]),
    ("call_arg_matches", &["callee", "matcher"], &["arg_index", "arg_count", "scope"]),
    ("call_keyword", &["callee", "keyword"], &["matcher", "scope"]),
    ("imports_from", &["module", "names"], &[]),
    ("import_absent", &["module", "name"], &[]),
];

pub(crate) fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

fn check_matcher(m: &Matcher, loc: &str) -> Result<(), SchemaError> {
    match m {
        Matcher::AnyOf(list) if list.is_empty() => Err(err(loc, "empty matcher list")),
        Matcher::AnyOf(list) => list.iter().enumerate().try_for_each(|(i, m)| check_matcher(m, &format!("{loc}[{i}]"))),
        Matcher::One(Shape::IsAttribute { attr }) if attr.is_empty() => Err(err(loc, "empty attr")),
        Matcher::One(_) => Ok(()),
    }
}

fn check_semantics(a: &Assertion, loc: &str) -> Result<(), SchemaError> {
    let nonempty = |s: &str, field: &str| {
        if s.is_empty() {
            Err(err(format!("{loc}.{field}"), "must be non-empty"))
        } else {
            Ok(())
        }
    };
    match &a.check {
        Check::FileExists => Ok(()),
        Check::ClassDefined { class } => nonempty(class, "class"),
        Check::DefinitionAbsent { name } | Check::UsageAbsent { name } => nonempty(name, "name"),
        Check::SelfAttrAssigned { class, attr } => {
            nonempty(class, "class")?;
            let items = attr.items();
            if items.is_empty() || items.iter().any(|s| s.is_empty()) {
                return Err(err(format!("{loc}.attr"), "needs at least one non-empty attribute"));
            }
            Ok(())
        }
        Check::FunctionSignature { function, .. } => nonempty(function, "function"),
        Check::MethodDefined { class, method } => {
            nonempty(class, "class")?;
            nonempty(method, "method")
        }
        Check::CallArgMatches { callee, arg_index, arg_count, matcher, .. } => {
            nonempty(callee, "callee")?;
            if let Some(n) = arg_count {
                if arg_index >= n {
                    return Err(err(format!("{loc}.arg_index"), "must be below arg_count"));
                }
            }
            check_matcher(matcher, &format!("{loc}.matcher"))
        }
        Check::CallKeyword { callee, keyword, matcher, .. } => {
            nonempty(callee, "callee")?;
            nonempty(keyword, "keyword")?;
            matcher.as_ref().map_or(Ok(()), |m| check_matcher(m, &format!("{loc}.matcher")))
        }
        Check::ImportsFrom { module, names } => {
            // "." alone is `from . import x`
            nonempty(module, "module")?;
            if names.is_empty() || names.iter().any(|n| n.is_empty()) {
                return Err(err(format!("{loc}.names"), "needs at least one non-empty name"));
            }
            Ok(())
        }
        Check::ImportAbsent { module, name } => {
            nonempty(module, "module")?;
            nonempty(name, "name")
        }
    }
}

fn load_assertion(v: &Value, loc: &str) -> Result<Assertion, SchemaError> {
    let obj = v.as_object().ok_or_else(|| err(loc, "expected an object"))?;
    let kind = match obj.get("kind") {
        Some(Value::String(k)) => k.as_str(),
        Some(_) => return Err(err(format!("{loc}.kind"), "expected a string")),
        None => return Err(err(loc, "missing field 'kind'")),
    };
    let (_, mandatory, optional) = KINDS
        .iter()
        .find(|(k, _, _)| *k == kind)
        .ok_or_else(|| err(format!("{loc}.kind"), format!("unknown kind '{kind}'")))?;
    for key in obj.keys() {
        if !COMMON.contains(&key.as_str()) && !mandatory.contains(&key.as_str()) && !optional.contains(&key.as_str()) {
            return Err(err(format!("{loc}.{key}"), format!("unknown field for kind '{kind}'")));
        }
    }
    for key in ["id", "path"].iter().chain(mandatory.iter()) {
        if !obj.contains_key(*key) {
            return Err(err(loc, format!("missing field '{key}'")));
        }
    }
    let a: Assertion = serde_json::from_value(v.clone()).map_err(|e| err(loc, e.to_string()))?;
    if !valid_id(&a.id) {
        return Err(err(format!("{loc}.id"), format!("'{}' does not match [a-z0-9_]+", a.id)));
    }
    if clean_rel_path(&a.path).is_none() {
        return Err(err(format!("{loc}.path"), "must be a non-empty repo-relative path"));
    }
    check_semantics(&a, loc)?;
    Ok(a)
}

/// Parse and validate a suite document.
pub fn load_suite(document: &str) -> Result<AssertionSuite, SchemaError> {
    let root: Value = serde_json::from_str(document).map_err(|e| err("$", e.to_string()))?;
    let obj = root.as_object().ok_or_else(|| err("$", "expected an object"))?;
    for key in obj.keys() {
        if !["schema_version", "task_id", "assertions"].contains(&key.as_str()) {
            return Err(err(key.clone(), "unknown field"));
        }
    }
    match obj.get("schema_version").and_then(Value::as_u64) {
        Some(v) if v == SUITE_SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(err("schema_version", format!("unsupported version {v}"))),
        None => return Err(err("schema_version", "missing or not an integer")),
    }
    let task_id = match obj.get("task_id") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        _ => return Err(err("task_id", "missing or empty")),
    };
    let list =
        obj.get("assertions").and_then(Value::as_array).ok_or_else(|| err("assertions", "missing or not a list"))?;
    if list.is_empty() {
        return Err(err("assertions", "suite has no assertions"));
    }
    let mut seen = HashSet::new();
    let mut assertions = Vec::with_capacity(list.len());
    for (i, v) in list.iter().enumerate() {
        let loc = format!("assertions[{i}]");
        let a = load_assertion(v, &loc)?;
        if !seen.insert(a.id.clone()) {
            return Err(err(format!("{loc}.id"), format!("duplicate id '{}'", a.id)));
        }
        assertions.push(a);
    }
    Ok(AssertionSuite { schema_version: SUITE_SCHEMA_VERSION, task_id, assertions })
}
