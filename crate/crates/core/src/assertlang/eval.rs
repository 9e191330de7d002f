use std::collections::HashMap;

use super::{
    basename, Assertion, AssertionOutcome, AssertionSuite, Check, Expectation, Matcher, ParamSpec, Scope, Shape,
    SourceFiles, Status,
};
use crate::pytree::{parse_bytes, NodeAttrs, NodeKind, ParseFailure, SyntaxNode, SyntaxTree};

/// Result of applying a check to a parsed file.
#[derive(Debug, Clone, PartialEq)]
pub enum CheckVerdict {
    Pass,
    Fail {
        message: String,
        expectation: Expectation,
        /// False when the failure is a precondition (e.g. the enclosing class is missing),
        /// in which case a suite-supplied message does not replace it.
        primary: bool,
    },
}

fn fail(message: String) -> CheckVerdict {
    CheckVerdict::Fail { message, expectation: Expectation::IsTrue, primary: true }
}

fn fail_absent(message: String) -> CheckVerdict {
    CheckVerdict::Fail { message, expectation: Expectation::IsFalse, primary: true }
}

impl Shape {
    pub fn accepts(&self, node: &SyntaxNode) -> bool {
        match self {
            Shape::Any => true,
            Shape::IsName { name } => {
                node.kind == NodeKind::Name && name.as_deref().is_none_or(|want| node.name() == Some(want))
            }
            Shape::IsAttribute { attr } => node.kind == NodeKind::Attribute && node.name() == Some(attr),
            Shape::IsConstant { value } => node.literal().is_some_and(|lit| value.matches(lit)),
        }
    }
}

impl Matcher {
    pub fn accepts(&self, node: &SyntaxNode) -> bool {
        match self {
            Matcher::AnyOf(list) => list.iter().any(|m| m.accepts(node)),
            Matcher::One(shape) => shape.accepts(node),
        }
    }
}

fn defs_named<'a>(root: &'a SyntaxNode, kind: NodeKind, name: &str) -> Vec<&'a SyntaxNode> {
    root.walk().filter(|n| n.is(kind, name)).collect()
}

/// Subtrees a scoped search runs over, or the precondition failure when the scope is missing.
fn scope_roots<'a>(
    root: &'a SyntaxNode,
    scope: Option<&Scope>,
    file: &str,
) -> Result<Vec<&'a SyntaxNode>, CheckVerdict> {
    let mut roots = vec![root];
    let Some(scope) = scope else { return Ok(roots) };
    if let Some(class) = &scope.class {
        roots = roots.iter().flat_map(|r| defs_named(r, NodeKind::ClassDef, class)).collect();
        if roots.is_empty() {
            return Err(CheckVerdict::Fail {
                message: format!("Class '{class}' not found in {file}"),
                expectation: Expectation::IsNotNone,
                primary: false,
            });
        }
    }
    if let Some(function) = &scope.function {
        roots = roots.iter().flat_map(|r| defs_named(r, NodeKind::FunctionDef, function)).collect();
        if roots.is_empty() {
            let message = match &scope.class {
                Some(class) => format!("Method '{function}' not found in {class} class"),
                None => format!("Function '{function}' not found in {file}"),
            };
            return Err(CheckVerdict::Fail { message, expectation: Expectation::IsTrue, primary: false });
        }
    }
    Ok(roots)
}

fn calls_to<'a>(roots: &[&'a SyntaxNode], callee: &'a str) -> impl Iterator<Item = &'a SyntaxNode> + 'a {
    let roots = roots.to_vec();
    roots
        .into_iter()
        .flat_map(move |r| r.walk().filter(move |n| n.kind == NodeKind::Call && n.callee_name() == Some(callee)))
}

fn render_signature(function: &str, params: &[ParamSpec], returns: Option<&str>) -> String {
    let params: Vec<String> = params
        .iter()
        .map(|p| {
            let name = p.name.as_deref().unwrap_or("_");
            match &p.annotation {
                Some(a) => format!("{name}: {a}"),
                None => name.to_string(),
            }
        })
        .collect();
    let ret = returns.map(|r| format!(" -> {r}")).unwrap_or_default();
    format!("def {function}({}){ret}", params.join(", "))
}

fn signature_matches(def: &SyntaxNode, want: &[ParamSpec], returns: Option<&str>, in_class: bool) -> bool {
    let NodeAttrs::FunctionDef { params, returns: got_returns, .. } = &def.attrs else { return false };
    let mut positional: Vec<_> = params.iter().filter(|p| p.kind.is_positional()).collect();
    if in_class {
        if let Some(first) = positional.first() {
            let receiver = first.name == "self" || first.name == "cls";
            let named_in_want = want.first().and_then(|w| w.name.as_deref()) == Some(first.name.as_str());
            if receiver && !named_in_want {
                positional.remove(0);
            }
        }
    }
    if positional.len() != want.len() {
        return false;
    }
    let params_ok = want.iter().zip(&positional).all(|(w, got)| {
        w.name.as_deref().is_none_or(|n| n == got.name)
            && w.annotation.as_deref().is_none_or(|a| got.annotation.as_ref().and_then(|g| g.as_name()) == Some(a))
    });
    params_ok && returns.is_none_or(|r| got_returns.as_ref().and_then(|g| g.as_name()) == Some(r))
}

/// Imported names brought in by `from <module> import ...` anywhere in the file,
/// pooled across statements. With `dotted_imports`, `import module.x` also counts as `x`.
fn imported_names<'a>(root: &'a SyntaxNode, module: &str, dotted_imports: bool) -> Vec<&'a str> {
    let level = (module.len() - module.trim_start_matches('.').len()) as u32;
    let bare = module.trim_start_matches('.');
    let bare = (!bare.is_empty()).then_some(bare);
    let prefix = format!("{module}.");
    let mut out = Vec::new();
    for n in root.walk() {
        match &n.attrs {
            NodeAttrs::ImportFrom { module: m, level: l, names } if m.as_deref() == bare && *l == level => {
                out.extend(names.iter().map(|a| a.name.as_str()));
            }
            NodeAttrs::Import { names } if dotted_imports => {
                out.extend(names.iter().filter_map(|a| a.name.strip_prefix(prefix.as_str())));
            }
            _ => {}
        }
    }
    out
}

/// Apply a check to an already-parsed file. `path` is only used for messages.
pub fn check_tree(check: &Check, tree: &SyntaxTree, path: &str) -> CheckVerdict {
    let file = basename(path);
    let root = &tree.root;
    match check {
        Check::FileExists => CheckVerdict::Pass,
        Check::ClassDefined { class } => {
            if defs_named(root, NodeKind::ClassDef, class).is_empty() {
                fail(format!("Class '{class}' not found in {file}"))
            } else {
                CheckVerdict::Pass
            }
        }
        Check::DefinitionAbsent { name } => {
            let found = root
                .walk()
                .any(|n| matches!(n.kind, NodeKind::ClassDef | NodeKind::FunctionDef) && n.name() == Some(name));
            if found {
                fail_absent(format!("'{name}' is still defined in {file}"))
            } else {
                CheckVerdict::Pass
            }
        }
        Check::UsageAbsent { name } => {
            let found =
                root.walk().any(|n| matches!(n.kind, NodeKind::Name | NodeKind::Attribute) && n.name() == Some(name));
            if found {
                fail_absent(format!("'{name}' found in {path}, but it should not be used"))
            } else {
                CheckVerdict::Pass
            }
        }
        Check::SelfAttrAssigned { class, attr } => {
            let classes = defs_named(root, NodeKind::ClassDef, class);
            if classes.is_empty() {
                return CheckVerdict::Fail {
                    message: format!("Class '{class}' not found in {file}"),
                    expectation: Expectation::IsNotNone,
                    primary: false,
                };
            }
            let assigned: Vec<&str> = classes
                .iter()
                .flat_map(|c| c.walk())
                .filter(|n| n.kind == NodeKind::Assign)
                .flat_map(|n| n.assign_targets())
                .filter(|t| t.kind == NodeKind::Attribute)
                .filter_map(|t| t.name())
                .collect();
            match attr.items().into_iter().find(|a| !assigned.contains(a)) {
                Some(missing) => fail(format!("Attribute 'self.{missing}' not found in {class} class")),
                None => CheckVerdict::Pass,
            }
        }
        Check::FunctionSignature { function, params, returns, scope } => {
            let roots = match scope_roots(root, scope.as_ref(), file) {
                Ok(r) => r,
                Err(v) => return v,
            };
            let in_class = scope.as_ref().is_some_and(|s| s.class.is_some());
            let found = roots
                .iter()
                .flat_map(|r| defs_named(r, NodeKind::FunctionDef, function))
                .any(|d| signature_matches(d, params, returns.as_deref(), in_class));
            if found {
                CheckVerdict::Pass
            } else {
                let sig = render_signature(function, params, returns.as_deref());
                fail(format!("Function '{function}' with signature '{sig}' not found in {file}"))
            }
        }
        Check::MethodDefined { class, method } => {
            let classes = defs_named(root, NodeKind::ClassDef, class);
            if classes.is_empty() {
                return CheckVerdict::Fail {
                    message: format!("Class '{class}' not found in {file}"),
                    expectation: Expectation::IsNotNone,
                    primary: false,
                };
            }
            if classes.iter().any(|c| !defs_named(c, NodeKind::FunctionDef, method).is_empty()) {
                CheckVerdict::Pass
            } else {
                fail(format!("Method '{method}' not found in {class} class"))
            }
        }
        Check::CallArgMatches { callee, arg_index, arg_count, matcher, scope } => {
            let roots = match scope_roots(root, scope.as_ref(), file) {
                Ok(r) => r,
                Err(v) => return v,
            };
            let found = calls_to(&roots, callee).any(|call| {
                let args = call.call_args();
                arg_count.is_none_or(|n| args.len() == n) && args.get(*arg_index).is_some_and(|a| matcher.accepts(a))
            });
            if found {
                CheckVerdict::Pass
            } else {
                fail(format!("No call to '{callee}' in {file} passes a matching argument at position {arg_index}"))
            }
        }
        Check::CallKeyword { callee, keyword, matcher, scope } => {
            let roots = match scope_roots(root, scope.as_ref(), file) {
                Ok(r) => r,
                Err(v) => return v,
            };
            let found = calls_to(&roots, callee).any(|call| {
                call.call_keywords().iter().any(|kw| {
                    kw.name() == Some(keyword)
                        && matcher.as_ref().is_none_or(|m| kw.keyword_value().is_some_and(|v| m.accepts(v)))
                })
            });
            if found {
                CheckVerdict::Pass
            } else {
                fail(format!("No call to '{callee}' in {file} passes the keyword '{keyword}'"))
            }
        }
        Check::ImportsFrom { module, names } => {
            let got = imported_names(root, module, false);
            match names.iter().find(|n| !got.contains(&n.as_str())) {
                Some(missing) => fail(format!("Import '{missing}' not found in {file}")),
                None => CheckVerdict::Pass,
            }
        }
        Check::ImportAbsent { module, name } => {
            if imported_names(root, module, true).contains(&name.as_str()) {
                fail_absent(format!("'{name}' is still imported from '{module}' in {file}"))
            } else {
                CheckVerdict::Pass
            }
        }
    }
}

fn render_override(template: &str, path: &str) -> String {
    template.replace("{file}", basename(path)).replace("{path}", path)
}

type Loaded = Result<Option<Result<SyntaxTree, ParseFailure>>, String>;

fn load(files: &(impl SourceFiles + ?Sized), path: &str) -> Loaded {
    match files.read_file(path) {
        Ok(None) => Ok(None),
        Ok(Some(bytes)) => Ok(Some(parse_bytes(&bytes, path))),
        Err(e) => Err(format!("cannot read {path}: {e}")),
    }
}

fn outcome(a: &Assertion, loaded: &Loaded) -> AssertionOutcome {
    let tree = match loaded {
        Err(io) => return AssertionOutcome::error(&a.id, io.clone()),
        Ok(None) => {
            return AssertionOutcome {
                id: a.id.clone(),
                status: Status::Fail,
                message: format!("{} does not exist", a.path),
                expectation: Expectation::IsTrue,
                parse_failure: None,
            }
        }
        Ok(Some(Err(pf))) => {
            let mut o = AssertionOutcome::error(&a.id, format!("SyntaxError in {}: {pf}", a.path));
            o.parse_failure = Some(pf.clone());
            return o;
        }
        Ok(Some(Ok(tree))) => tree,
    };
    match check_tree(&a.check, tree, &a.path) {
        CheckVerdict::Pass => AssertionOutcome::pass(&a.id),
        CheckVerdict::Fail { message, expectation, primary } => {
            let message = match (&a.failure_message, primary) {
                (Some(t), true) => render_override(t, &a.path),
                _ => message,
            };
            AssertionOutcome { id: a.id.clone(), status: Status::Fail, message, expectation, parse_failure: None }
        }
    }
}

/// Evaluate one assertion against a file tree. Only the assertion's own file is read.
pub fn evaluate_assertion(a: &Assertion, files: &(impl SourceFiles + ?Sized)) -> AssertionOutcome {
    outcome(a, &load(files, &a.path))
}

/// Evaluate every assertion in order; each referenced file is parsed once.
pub fn run_suite(suite: &AssertionSuite, files: &(impl SourceFiles + ?Sized)) -> Vec<AssertionOutcome> {
    let mut cache: HashMap<&str, Loaded> = HashMap::new();
    suite
        .assertions
        .iter()
        .map(|a| {
            let loaded = cache.entry(a.path.as_str()).or_insert_with(|| load(files, &a.path));
            outcome(a, loaded)
        })
        .collect()
}
