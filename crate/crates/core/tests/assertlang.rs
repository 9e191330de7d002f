use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refkit::assertlang::*;
use refkit::pytree::{parse_source, NodeKind, SyntaxNode};
use serde_json::{json, Value};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures");

fn corpus() -> PathBuf {
    Path::new(FIXTURES).join("corpus")
}

fn suite(name: &str) -> AssertionSuite {
    let text = std::fs::read_to_string(corpus().join("suites").join(format!("{name}.json"))).unwrap();
    load_suite(&text).unwrap()
}

fn repo(name: &str) -> PathBuf {
    corpus().join("repos").join(name)
}

fn repo_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    walkdir::WalkDir::new(root)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            let rel = e.path().strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
            (rel, std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn one(assertion: Value) -> Result<AssertionSuite, SchemaError> {
    load_suite(&json!({"schema_version": 1, "task_id": "t", "assertions": [assertion]}).to_string())
}

fn mem(files: &[(&str, &str)]) -> BTreeMap<String, Vec<u8>> {
    files.iter().map(|(p, s)| (p.to_string(), s.as_bytes().to_vec())).collect()
}

// ---- loading ----

#[test]
fn minimal_suite_loads() {
    let s = one(json!({"id": "a", "kind": "file_exists", "path": "x.py"})).unwrap();
    assert_eq!(s.assertions.len(), 1);
    assert_eq!(s.assertions[0].check, Check::FileExists);
}

#[test]
fn schema_violations_are_located() {
    let dup = load_suite(
        &json!({"schema_version": 1, "task_id": "t", "assertions": [
            {"id": "a", "kind": "file_exists", "path": "x.py"},
            {"id": "a", "kind": "file_exists", "path": "y.py"}]})
        .to_string(),
    )
    .unwrap_err();
    assert_eq!(dup.location, "assertions[1].id");
    assert!(dup.reason.contains("duplicate"));

    let unknown_kind = one(json!({"id": "a", "kind": "frobnicate", "path": "x.py"})).unwrap_err();
    assert_eq!(unknown_kind.location, "assertions[0].kind");

    let missing = one(json!({"id": "a", "kind": "class_defined", "path": "x.py"})).unwrap_err();
    assert!(missing.reason.contains("'class'"), "{missing}");

    let extra =
        one(json!({"id": "a", "kind": "class_defined", "path": "x.py", "class": "C", "method": "m"})).unwrap_err();
    assert_eq!(extra.location, "assertions[0].method");

    let bad_id = one(json!({"id": "Bad-Id", "kind": "file_exists", "path": "x.py"})).unwrap_err();
    assert_eq!(bad_id.location, "assertions[0].id");

    let bad_matcher = one(json!({"id": "a", "kind": "call_arg_matches", "path": "x.py", "callee": "f",
        "matcher": {"kind": "is_attribute"}}))
    .unwrap_err();
    assert_eq!(bad_matcher.location, "assertions[0]");

    let escaping = one(json!({"id": "a", "kind": "file_exists", "path": "../x.py"})).unwrap_err();
    assert_eq!(escaping.location, "assertions[0].path");

    let empty = load_suite(&json!({"schema_version": 1, "task_id": "t", "assertions": []}).to_string()).unwrap_err();
    assert_eq!(empty.location, "assertions");

    let top =
        load_suite(&json!({"schema_version": 1, "task_id": "t", "assertions": [], "x": 1}).to_string()).unwrap_err();
    assert_eq!(top.location, "x");
}

#[test]
fn gunzip_suite_ids_follow_the_reference_test_names() {
    let ids: Vec<String> = suite("parameterize-gunzip").assertions.into_iter().map(|a| a.id).collect();
    assert_eq!(
        ids,
        [
            "test_gunzipparams_class_exists",
            "test_gunzipparams_has_data_and_max_size",
            "test_gunzip_function_signature",
            "test_gunzip_in_sitemapspider",
            "test_imports_in_sitemap",
            "test_imports_in_test_utils_gz",
            "test_gunzipparams_used_in_test_utils_gz",
            "test_imports_in_test_downloadermiddleware_httpcompression",
            "test_gunzipparams_used_in_httpcompression_middleware",
        ]
    );
}

#[test]
fn suites_round_trip_through_json() {
    for name in ["parameterize-gunzip", "add-log-parameter-xmliter", "rename-iterloc", "rename-send-from-directory"] {
        let s = suite(name);
        assert_eq!(load_suite(&s.to_json()).unwrap(), s);
    }
}

#[test]
fn shipped_suites_validate_against_the_schema_document_when_python_is_available() {
    let script = r#"
import glob, json, sys
try:
    import jsonschema
except ImportError:
    print("skip"); sys.exit(0)
base = sys.argv[1]
schema = json.load(open(base + "/schema/suite.schema.json"))
for f in sorted(glob.glob(base + "/suites/*.json")):
    jsonschema.validate(json.load(open(f)), schema)
print("ok")
"#;
    let Ok(out) = Command::new("python3").arg("-c").arg(script).arg(corpus()).output() else { return };
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.trim() == "ok" || stdout.trim() == "skip");
}

// ---- per-kind semantics ----

fn eval_on(src: &str, assertion: Value) -> AssertionOutcome {
    let s = one(assertion).unwrap();
    let path = s.assertions[0].path.clone();
    evaluate_assertion(&s.assertions[0], &mem(&[(&path, src)]))
}

#[test]
fn function_signature_with_annotation_and_return() {
    let a = json!({"id": "sig", "kind": "function_signature", "path": "gz.py", "function": "gunzip",
        "params": [{"annotation": "GunzipParams"}], "returns": "bytes"});
    let ok = eval_on("def gunzip(params: GunzipParams) -> bytes:\n    return b''\n", a.clone());
    assert_eq!(ok.status, Status::Pass);
    assert!(ok.message.is_empty());
    let old = eval_on("def gunzip(data: bytes, *, max_size: int = 0) -> bytes:\n    pass\n", a.clone());
    assert_eq!(old.status, Status::Fail);
    assert_eq!(
        old.message,
        "Function 'gunzip' with signature 'def gunzip(_: GunzipParams) -> bytes' not found in gz.py"
    );
    let no_ret = eval_on("def gunzip(params: GunzipParams):\n    pass\n", a.clone());
    assert_eq!(no_ret.status, Status::Fail);
    let asynchronous = eval_on("async def gunzip(params: GunzipParams) -> bytes:\n    pass\n", a);
    assert_eq!(asynchronous.status, Status::Pass);
}

#[test]
fn method_signature_skips_receiver() {
    let src = "class A:\n    def run(self, x, y=1):\n        pass\n";
    let a = json!({"id": "m", "kind": "function_signature", "path": "a.py", "function": "run",
        "params": [{"name": "x"}, {"name": "y"}], "scope": {"class": "A"}});
    assert_eq!(eval_on(src, a).status, Status::Pass);
    let with_self = json!({"id": "m", "kind": "function_signature", "path": "a.py", "function": "run",
        "params": [{"name": "self"}, {"name": "x"}, {"name": "y"}], "scope": {"class": "A"}});
    assert_eq!(eval_on(src, with_self).status, Status::Pass);
    let unscoped = json!({"id": "m", "kind": "function_signature", "path": "a.py", "function": "run",
        "params": [{"name": "x"}, {"name": "y"}]});
    assert_eq!(eval_on(src, unscoped).status, Status::Fail);
}

#[test]
fn self_attr_messages() {
    let a = json!({"id": "attrs", "kind": "self_attr_assigned", "path": "gz.py", "class": "GunzipParams",
        "attr": "data"});
    let missing = eval_on("class GunzipParams:\n    def __init__(self, data):\n        pass\n", a.clone());
    assert_eq!(missing.status, Status::Fail);
    assert_eq!(missing.message, "Attribute 'self.data' not found in GunzipParams class");
    assert_eq!(missing.expectation, Expectation::IsTrue);
    let no_class = eval_on("x = 1\n", a.clone());
    assert_eq!(no_class.message, "Class 'GunzipParams' not found in gz.py");
    assert_eq!(no_class.expectation, Expectation::IsNotNone);
    let present = eval_on(
        "class GunzipParams:\n    def __init__(self, data, max_size):\n        self.data = data\n        self.max_size = max_size\n",
        a,
    );
    assert_eq!(present.status, Status::Pass);
}

#[test]
fn missing_file_fails_with_does_not_exist() {
    let s = one(json!({"id": "f", "kind": "file_exists", "path": "scrapy/utils/gone.py"})).unwrap();
    let o = evaluate_assertion(&s.assertions[0], &mem(&[]));
    assert_eq!(o.status, Status::Fail);
    assert_eq!(o.message, "scrapy/utils/gone.py does not exist");
    let on_disk = evaluate_assertion(&s.assertions[0], repo("scrapy-mini").as_path());
    assert_eq!(on_disk.status, Status::Fail);
}

#[test]
fn usage_absent_sees_attribute_access() {
    let src = "from salt.defaults import exitcodes\n\ndef f():\n    return exitcodes.EX_CANTCREAT\n";
    let a = json!({"id": "u", "kind": "usage_absent", "path": "salt/client/ssh/__init__.py", "name": "EX_CANTCREAT"});
    let o = eval_on(src, a.clone());
    assert_eq!(o.status, Status::Fail);
    assert_eq!(o.expectation, Expectation::IsFalse);
    assert_eq!(o.message, "'EX_CANTCREAT' found in salt/client/ssh/__init__.py, but it should not be used");
    assert_eq!(eval_on("x = 'EX_CANTCREAT'\n", a).status, Status::Pass);
}

#[test]
fn call_arg_matcher_on_name_versus_attribute_chain() {
    let a = json!({"id": "c", "kind": "call_arg_matches", "path": "m.py", "callee": "gunzip", "arg_index": 0,
        "matcher": [{"kind": "is_name"}, {"kind": "is_attribute", "attr": "GunzipParams"}]});
    assert_eq!(eval_on("body = gunzip(response.body)\n", a.clone()).status, Status::Fail);
    assert_eq!(eval_on("body = gunzip(params)\n", a.clone()).status, Status::Pass);
    assert_eq!(eval_on("body = gunzip(gz.GunzipParams)\n", a.clone()).status, Status::Pass);
    assert_eq!(eval_on("body = gunzip(GunzipParams(b, 1))\n", a.clone()).status, Status::Fail);
    assert_eq!(eval_on("body = self.gunzip(params)\n", a).status, Status::Fail);
}

#[test]
fn scope_precondition_messages() {
    let a = json!({"id": "c", "kind": "call_arg_matches", "path": "sitemap.py", "callee": "gunzip",
        "scope": {"class": "SitemapSpider", "function": "_get_sitemap_body"},
        "matcher": {"kind": "any"}, "failure_message": "gunzip inside '{file}' is wrong"});
    let no_class = eval_on("x = 1\n", a.clone());
    assert_eq!(no_class.message, "Class 'SitemapSpider' not found in sitemap.py");
    let no_method = eval_on("class SitemapSpider:\n    pass\n", a.clone());
    assert_eq!(no_method.message, "Method '_get_sitemap_body' not found in SitemapSpider class");
    let no_call = eval_on("class SitemapSpider:\n    def _get_sitemap_body(self):\n        pass\n", a.clone());
    assert_eq!(no_call.message, "gunzip inside 'sitemap.py' is wrong");
    let outside =
        eval_on("class SitemapSpider:\n    def _get_sitemap_body(self):\n        pass\n\ngunzip(x)\n", a.clone());
    assert_eq!(outside.status, Status::Fail);
    let inside = eval_on(
        "class SitemapSpider:\n    def _get_sitemap_body(self):\n        def inner():\n            return gunzip(x)\n",
        a,
    );
    assert_eq!(inside.status, Status::Pass);
}

#[test]
fn call_keyword_with_constant_matcher() {
    let a = json!({"id": "k", "kind": "call_keyword", "path": "feed.py", "callee": "xmliter", "keyword": "log",
        "matcher": {"kind": "is_constant", "value": false}});
    assert_eq!(eval_on("xmliter(r, 'n', log=False)\n", a.clone()).status, Status::Pass);
    assert_eq!(eval_on("xmliter(r, 'n', log=0)\n", a.clone()).status, Status::Fail);
    assert_eq!(eval_on("xmliter(r, 'n', log=True)\n", a.clone()).status, Status::Fail);
    assert_eq!(eval_on("xmliter(r, 'n', **{'log': False})\n", a).status, Status::Fail);
}

#[test]
fn imports_pool_across_statements_and_respect_level() {
    let a = json!({"id": "i", "kind": "imports_from", "path": "s.py", "module": "scrapy.utils.gz",
        "names": ["GunzipParams", "gunzip"]});
    assert_eq!(eval_on("from scrapy.utils.gz import gunzip as g, GunzipParams\n", a.clone()).status, Status::Pass);
    assert_eq!(
        eval_on("from scrapy.utils.gz import gunzip\nfrom scrapy.utils.gz import GunzipParams\n", a.clone()).status,
        Status::Pass
    );
    let partial = eval_on("from scrapy.utils.gz import gunzip\n", a);
    assert_eq!(partial.message, "Import 'GunzipParams' not found in s.py");

    let rel = json!({"id": "i", "kind": "imports_from", "path": "flask/__init__.py", "module": ".helpers",
        "names": ["h"]});
    assert_eq!(eval_on("from .helpers import h\n", rel.clone()).status, Status::Pass);
    assert_eq!(eval_on("from helpers import h\n", rel.clone()).status, Status::Fail);
    assert_eq!(eval_on("from ..helpers import h\n", rel).status, Status::Fail);

    let absent = json!({"id": "i", "kind": "import_absent", "path": "t.py", "module": "a.b", "name": "c"});
    assert_eq!(eval_on("import a.b.c\n", absent.clone()).status, Status::Fail);
    assert_eq!(eval_on("from a.b import c as d\n", absent.clone()).status, Status::Fail);
    assert_eq!(eval_on("from a.b import x\nimport a.bc\n", absent).status, Status::Pass);
}

#[test]
fn definition_and_method_checks() {
    let gone = json!({"id": "d", "kind": "definition_absent", "path": "h.py", "name": "send_from_directory"});
    assert_eq!(eval_on("def send_from_directory(d, p):\n    pass\n", gone.clone()).status, Status::Fail);
    assert_eq!(eval_on("class send_from_directory:\n    pass\n", gone.clone()).status, Status::Fail);
    assert_eq!(eval_on("send_from_directory = other\n", gone).status, Status::Pass);

    let method = json!({"id": "m", "kind": "method_defined", "path": "s.py", "class": "S", "method": "body"});
    assert_eq!(eval_on("class S:\n    async def body(self):\n        pass\n", method.clone()).status, Status::Pass);
    let o = eval_on("class S:\n    pass\ndef body():\n    pass\n", method);
    assert_eq!(o.message, "Method 'body' not found in S class");
}

#[test]
fn parse_failure_is_an_error_outcome() {
    let a = json!({"id": "c", "kind": "class_defined", "path": "bad.py", "class": "C"});
    let o = eval_on("class C(:\n    pass\n", a);
    assert_eq!(o.status, Status::Error);
    let pf = o.parse_failure.expect("carries the parse failure");
    assert_eq!(pf.line, 1);
    assert!(o.message.contains("bad.py") && o.message.contains(&pf.message), "{}", o.message);
}

#[test]
fn unreferenced_broken_files_are_ignored() {
    let s = one(json!({"id": "c", "kind": "class_defined", "path": "good.py", "class": "C"})).unwrap();
    let files = mem(&[("good.py", "class C:\n    pass\n"), ("broken.py", "def (:\n")]);
    assert_eq!(run_suite(&s, &files)[0].status, Status::Pass);
}

// ---- fixture partitions ----

fn expected_partitions() -> Value {
    serde_json::from_str(&std::fs::read_to_string(corpus().join("expected/partitions.json")).unwrap()).unwrap()
}

fn repo_of(task: &str) -> &'static str {
    if task == "rename-send-from-directory" {
        "flask-mini"
    } else {
        "scrapy-mini"
    }
}

#[test]
fn unpatched_partitions_match_hand_enumeration() {
    let expected = expected_partitions();
    for (task, entry) in expected.as_object().unwrap() {
        let s = suite(task);
        let outcomes = run_suite(&s, repo(repo_of(task)).as_path());
        assert_eq!(outcomes.len(), s.assertions.len());
        let passed: BTreeSet<&str> = outcomes.iter().filter(|o| o.passed()).map(|o| o.id.as_str()).collect();
        let want: BTreeSet<&str> =
            entry["unpatched_pass"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        assert_eq!(passed, want, "{task}");
        for o in &outcomes {
            assert_eq!(o.passed(), o.message.is_empty(), "{task}/{}", o.id);
            assert_ne!(o.status, Status::Error);
        }
    }
}

#[test]
fn unpatched_gunzip_messages() {
    let outcomes = run_suite(&suite("parameterize-gunzip"), repo("scrapy-mini").as_path());
    let msg = |id: &str| outcomes.iter().find(|o| o.id == id).unwrap().message.clone();
    assert_eq!(msg("test_gunzipparams_class_exists"), "Class 'GunzipParams' not found in gz.py");
    assert_eq!(
        msg("test_gunzip_function_signature"),
        "Function 'gunzip' with signature 'def gunzip(params: GunzipParams) -> bytes' not found in gz.py"
    );
    assert_eq!(msg("test_imports_in_sitemap"), "Import 'GunzipParams' not found in sitemap.py");
    assert_eq!(
        msg("test_gunzipparams_used_in_test_utils_gz"),
        "gunzip function in 'test_utils_gz.py' does not use a 'GunzipParams' object as a parameter"
    );
}

// ---- invariants ----

fn all_suites() -> Vec<AssertionSuite> {
    ["parameterize-gunzip", "add-log-parameter-xmliter", "rename-iterloc", "rename-send-from-directory"]
        .into_iter()
        .map(suite)
        .collect()
}

#[test]
fn run_suite_is_deterministic() {
    for s in all_suites() {
        let root = repo(repo_of(&s.task_id));
        assert_eq!(run_suite(&s, root.as_path()), run_suite(&s, root.as_path()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Rewriting any file other than an assertion's own leaves its outcome unchanged.
    #[test]
    fn outcomes_depend_only_on_their_own_file(suite_ix in 0usize..4, victim in any::<prop::sample::Index>(),
                                              junk in "[ -~\n]{0,80}") {
        let s = &all_suites()[suite_ix];
        let mut files = repo_files(&repo(repo_of(&s.task_id)));
        let before = run_suite(s, &files);
        let keys: Vec<String> = files.keys().cloned().collect();
        let target = victim.get(&keys).clone();
        files.insert(target.clone(), junk.into_bytes());
        let after = run_suite(s, &files);
        prop_assert_eq!(after.len(), s.assertions.len());
        for ((a, b), assertion) in before.iter().zip(&after).zip(&s.assertions) {
            if assertion.path != target {
                prop_assert_eq!(a, b);
            }
        }
    }
}

// ---- brute-force oracle for call-argument matching ----

fn shapes() -> Vec<Shape> {
    let mut out = vec![Shape::Any, Shape::IsName { name: None }];
    for n in ["params", "body", "data", "it", "filename", "self", "x"] {
        out.push(Shape::IsName { name: Some(n.into()) });
    }
    for a in ["GunzipParams", "body", "sitemap_alternate_links", "static_folder", "text"] {
        out.push(Shape::IsAttribute { attr: a.into() });
    }
    out.push(Shape::IsConstant { value: ConstValue::Bool(false) });
    out.push(Shape::IsConstant { value: ConstValue::Int(10) });
    out.push(Shape::IsConstant { value: ConstValue::Str("loc".into()) });
    out.push(Shape::IsConstant { value: ConstValue::None(()) });
    out
}

/// Literal restatement: every Call with a bare-name callee, argument `idx`,
/// isinstance-style checks on the argument.
fn brute_calls<'a>(node: &'a SyntaxNode, out: &mut Vec<&'a SyntaxNode>) {
    if node.kind == NodeKind::Call {
        out.push(node);
    }
    for c in &node.children {
        brute_calls(c, out);
    }
}

fn brute_shape(arg: &SyntaxNode, shape: &Shape) -> bool {
    match shape {
        Shape::Any => true,
        Shape::IsName { name } => arg.kind == NodeKind::Name && (name.is_none() || arg.name == *name),
        Shape::IsAttribute { attr } => arg.kind == NodeKind::Attribute && arg.name.as_deref() == Some(attr.as_str()),
        Shape::IsConstant { value } => match (value, arg.literal()) {
            (ConstValue::Bool(b), Some(refkit::pytree::Literal::Bool(x))) => b == x,
            (ConstValue::Int(i), Some(refkit::pytree::Literal::Int(x))) => i.to_string() == *x,
            (ConstValue::Str(s), Some(refkit::pytree::Literal::Str(x))) => s == x,
            (ConstValue::None(()), Some(refkit::pytree::Literal::None)) => true,
            _ => false,
        },
    }
}

fn brute_verdict(root: &SyntaxNode, callee: &str, idx: usize, count: Option<usize>, shapes: &[Shape]) -> bool {
    let mut calls = Vec::new();
    brute_calls(root, &mut calls);
    calls.into_iter().any(|call| {
        let func = &call.children[0];
        if func.kind != NodeKind::Name || func.name.as_deref() != Some(callee) {
            return false;
        }
        let args = call.call_args();
        if count.is_some_and(|n| n != args.len()) {
            return false;
        }
        idx < args.len() && shapes.iter().any(|s| brute_shape(&args[idx], s))
    })
}

fn fixture_python_files() -> Vec<(String, String)> {
    let mut out = Vec::new();
    for r in ["scrapy-mini", "flask-mini"] {
        for (rel, bytes) in repo_files(&repo(r)) {
            if rel.ends_with(".py") {
                out.push((format!("{r}/{rel}"), String::from_utf8(bytes).unwrap()));
            }
        }
    }
    out
}

fn callees(root: &SyntaxNode) -> BTreeSet<String> {
    root.walk().filter(|n| n.kind == NodeKind::Call).filter_map(|n| n.callee_name().map(String::from)).collect()
}

#[test]
fn call_arg_matches_agrees_with_brute_force_on_every_fixture_call_shape() {
    let shapes = shapes();
    let mut checked = 0usize;
    let mut passes = 0usize;
    for (path, src) in fixture_python_files() {
        let tree = parse_source(&src, &path).unwrap();
        for callee in callees(&tree.root) {
            for idx in 0..3 {
                for count in [None, Some(1), Some(2), Some(3)] {
                    for s in &shapes {
                        let check = Check::CallArgMatches {
                            callee: callee.clone(),
                            arg_index: idx,
                            arg_count: count,
                            matcher: Matcher::One(s.clone()),
                            scope: None,
                        };
                        let engine = check_tree(&check, &tree, &path) == CheckVerdict::Pass;
                        let oracle = brute_verdict(&tree.root, &callee, idx, count, std::slice::from_ref(s));
                        assert_eq!(engine, oracle, "{path} {callee} idx={idx} count={count:?} {s:?}");
                        checked += 1;
                        passes += engine as usize;
                    }
                }
            }
        }
    }
    assert!(checked > 10_000 && passes > 100, "checked {checked}, passes {passes}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn any_of_matchers_agree_with_brute_force(file_ix in any::<prop::sample::Index>(),
                                              callee_ix in any::<prop::sample::Index>(),
                                              picks in prop::collection::vec(any::<prop::sample::Index>(), 1..4),
                                              idx in 0usize..3, count in prop::option::of(1usize..4)) {
        let files = fixture_python_files();
        let (path, src) = file_ix.get(&files);
        let tree = parse_source(src, path).unwrap();
        let names: Vec<String> = callees(&tree.root).into_iter().collect();
        prop_assume!(!names.is_empty());
        let callee = callee_ix.get(&names).clone();
        let all = shapes();
        let chosen: Vec<Shape> = picks.iter().map(|p| p.get(&all).clone()).collect();
        let check = Check::CallArgMatches {
            callee: callee.clone(),
            arg_index: idx,
            arg_count: count,
            matcher: Matcher::AnyOf(chosen.iter().cloned().map(Matcher::One).collect()),
            scope: None,
        };
        let engine = check_tree(&check, &tree, path) == CheckVerdict::Pass;
        prop_assert_eq!(engine, brute_verdict(&tree.root, &callee, idx, count, &chosen));
    }
}

// ---- live parity against the CPython-based oracle ----

fn python_oracle(suite_doc: &Value, workspace: &Path) -> Option<BTreeMap<String, String>> {
    let dir = tempfile::tempdir().unwrap();
    let suite_path = dir.path().join("suite.json");
    std::fs::write(&suite_path, suite_doc.to_string()).unwrap();
    let out = Command::new("python3")
        .arg(Path::new(FIXTURES).join("oracle/assertion_oracle.py"))
        .arg(&suite_path)
        .arg(workspace)
        .output()
        .ok()?;
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    Some(serde_json::from_slice(&out.stdout).unwrap())
}

fn random_assertions(rng: &mut ChaCha8Rng, files: &BTreeMap<String, Vec<u8>>, n: usize) -> Vec<Value> {
    let ident = regex::Regex::new(r"[A-Za-z_][A-Za-z0-9_]*").unwrap();
    let module_re = regex::Regex::new(r"(?m)^\s*(?:from\s+([.\w]+)\s+import|import\s+([\w.]+))").unwrap();
    let py: Vec<&String> = files.keys().filter(|k| k.ends_with(".py")).collect();
    let mut words: Vec<String> = files
        .values()
        .flat_map(|b| {
            ident.find_iter(std::str::from_utf8(b).unwrap()).map(|m| m.as_str().to_string()).collect::<Vec<_>>()
        })
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    words.push("nonexistent_name".into());
    let mut modules: Vec<String> = files
        .values()
        .flat_map(|b| {
            module_re
                .captures_iter(std::str::from_utf8(b).unwrap())
                .filter_map(|c| c.get(1).or(c.get(2)).map(|m| m.as_str().to_string()))
                .collect::<Vec<_>>()
        })
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    modules.push("no.such.module".into());
    let consts = [json!(true), json!(false), json!(null), json!(0), json!(1), json!(10), json!("loc"), json!(1.5)];

    let pick = |rng: &mut ChaCha8Rng, v: &[String]| v[rng.random_range(0..v.len())].clone();
    let shape = |rng: &mut ChaCha8Rng| -> Value {
        match rng.random_range(0..5) {
            0 => json!({"kind": "any"}),
            1 => json!({"kind": "is_name"}),
            2 => json!({"kind": "is_name", "name": pick(rng, &words)}),
            3 => json!({"kind": "is_attribute", "attr": pick(rng, &words)}),
            _ => json!({"kind": "is_constant", "value": consts[rng.random_range(0..consts.len())].clone()}),
        }
    };
    let matcher = |rng: &mut ChaCha8Rng| -> Value {
        if rng.random_bool(0.3) {
            Value::Array((0..rng.random_range(1..4)).map(|_| shape(rng)).collect())
        } else {
            shape(rng)
        }
    };
    let scope = |rng: &mut ChaCha8Rng| -> Option<Value> {
        match rng.random_range(0..4) {
            0 => Some(json!({"class": pick(rng, &words)})),
            1 => Some(json!({"function": pick(rng, &words)})),
            2 => Some(json!({"class": pick(rng, &words), "function": pick(rng, &words)})),
            _ => None,
        }
    };
    (0..n)
        .map(|i| {
            let path = if rng.random_bool(0.03) {
                "missing/file.py".to_string()
            } else {
                py[rng.random_range(0..py.len())].clone()
            };
            let mut a = match rng.random_range(0..11) {
                0 => json!({"kind": "file_exists"}),
                1 => json!({"kind": "class_defined", "class": pick(rng, &words)}),
                2 => json!({"kind": "definition_absent", "name": pick(rng, &words)}),
                3 => json!({"kind": "usage_absent", "name": pick(rng, &words)}),
                4 => {
                    let attrs: Vec<String> = (0..rng.random_range(1..3)).map(|_| pick(rng, &words)).collect();
                    json!({"kind": "self_attr_assigned", "class": pick(rng, &words), "attr": attrs})
                }
                5 => {
                    let params: Vec<Value> = (0..rng.random_range(0..4))
                        .map(|_| {
                            let mut p = serde_json::Map::new();
                            if rng.random_bool(0.6) {
                                p.insert("name".into(), json!(pick(rng, &words)));
                            }
                            if rng.random_bool(0.3) {
                                p.insert("annotation".into(), json!(pick(rng, &words)));
                            }
                            Value::Object(p)
                        })
                        .collect();
                    let mut a = json!({"kind": "function_signature", "function": pick(rng, &words), "params": params});
                    if rng.random_bool(0.3) {
                        a["returns"] = json!(pick(rng, &words));
                    }
                    if let Some(s) = scope(rng) {
                        a["scope"] = s;
                    }
                    a
                }
                6 => json!({"kind": "method_defined", "class": pick(rng, &words), "method": pick(rng, &words)}),
                7 => {
                    let idx = rng.random_range(0..3usize);
                    let mut a = json!({"kind": "call_arg_matches", "callee": pick(rng, &words), "arg_index": idx,
                        "matcher": matcher(rng)});
                    if rng.random_bool(0.4) {
                        a["arg_count"] = json!(idx + rng.random_range(1..3));
                    }
                    if let Some(s) = scope(rng) {
                        a["scope"] = s;
                    }
                    a
                }
                8 => {
                    let mut a =
                        json!({"kind": "call_keyword", "callee": pick(rng, &words), "keyword": pick(rng, &words)});
                    if rng.random_bool(0.5) {
                        a["matcher"] = matcher(rng);
                    }
                    if let Some(s) = scope(rng) {
                        a["scope"] = s;
                    }
                    a
                }
                9 => {
                    let names: Vec<String> = (0..rng.random_range(1..3)).map(|_| pick(rng, &words)).collect();
                    json!({"kind": "imports_from", "module": pick(rng, &modules), "names": names})
                }
                _ => json!({"kind": "import_absent", "module": pick(rng, &modules), "name": pick(rng, &words)}),
            };
            a["id"] = json!(format!("a{i}"));
            a["path"] = json!(path);
            a
        })
        .collect()
}

#[test]
fn random_suites_agree_with_the_cpython_oracle_when_available() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for r in ["scrapy-mini", "flask-mini"] {
        let root = repo(r);
        let files = repo_files(&root);
        let doc = json!({"schema_version": 1, "task_id": r, "assertions": random_assertions(&mut rng, &files, 3000)});
        let s = load_suite(&doc.to_string()).unwrap();
        let Some(oracle) = python_oracle(&doc, &root) else { return };
        let ours = run_suite(&s, root.as_path());
        let mut passes = 0;
        for o in &ours {
            let theirs = &oracle[&o.id];
            let mine = if o.passed() { "pass" } else { "fail" };
            let a = s.assertions.iter().find(|a| a.id == o.id).unwrap();
            assert_eq!(mine, theirs, "{r}: {}", serde_json::to_string(a).unwrap());
            passes += o.passed() as usize;
        }
        assert!(passes > 300, "{r}: only {passes} passing assertions generated");
    }
}

#[test]
fn unpatched_partitions_agree_with_the_cpython_oracle_when_available() {
    for s in all_suites() {
        let root = repo(repo_of(&s.task_id));
        let doc: Value = serde_json::from_str(&s.to_json()).unwrap();
        let Some(oracle) = python_oracle(&doc, &root) else { return };
        for o in run_suite(&s, root.as_path()) {
            assert_eq!(if o.passed() { "pass" } else { "fail" }, oracle[&o.id], "{}/{}", s.task_id, o.id);
        }
    }
}
