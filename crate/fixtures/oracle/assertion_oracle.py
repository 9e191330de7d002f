"""Literal re-implementation of the structural test predicates with CPython's ast.

Each suite kind is evaluated the way a hand-written unittest would do it:
ast.parse the file, ast.walk, isinstance checks. Used once to confirm the
hand-enumerated pass/fail partitions stored in expected/partitions.json.

usage: python3 assertion_oracle.py SUITE.json WORKSPACE_DIR
"""
import ast
import json
import os
import sys


def walk_named(tree, cls, name):
    return [n for n in ast.walk(tree) if isinstance(n, cls) and n.name == name]


def scope_nodes(tree, scope):
    nodes = [tree]
    if not scope:
        return nodes
    if scope.get("class"):
        nodes = [c for n in nodes for c in walk_named(n, ast.ClassDef, scope["class"])]
    if scope.get("function"):
        fns = (ast.FunctionDef, ast.AsyncFunctionDef)
        nodes = [f for n in nodes for f in walk_named(n, fns, scope["function"])]
    return nodes


def match_arg(arg, matcher):
    if isinstance(matcher, list):
        return any(match_arg(arg, m) for m in matcher)
    kind = matcher["kind"]
    if kind == "any":
        return True
    if kind == "is_name":
        return isinstance(arg, ast.Name) and matcher.get("name", arg.id) == arg.id
    if kind == "is_attribute":
        return isinstance(arg, ast.Attribute) and arg.attr == matcher["attr"]
    if kind == "is_constant":
        return isinstance(arg, ast.Constant) and arg.value == matcher["value"] and type(arg.value) is type(matcher["value"])
    raise ValueError(kind)


def ann_id(node):
    if isinstance(node, ast.Name):
        return node.id
    if isinstance(node, ast.Attribute):
        inner = ann_id(node.value)
        return None if inner is None else inner + "." + node.attr
    return None


def check(a, tree):
    kind = a["kind"]
    if kind == "file_exists":
        return True
    if kind == "class_defined":
        return bool(walk_named(tree, ast.ClassDef, a["class"]))
    if kind == "definition_absent":
        defs = (ast.ClassDef, ast.FunctionDef, ast.AsyncFunctionDef)
        return not any(isinstance(n, defs) and n.name == a["name"] for n in ast.walk(tree))
    if kind == "usage_absent":
        for n in ast.walk(tree):
            if isinstance(n, ast.Name) and n.id == a["name"]:
                return False
            if isinstance(n, ast.Attribute) and n.attr == a["name"]:
                return False
        return True
    if kind == "self_attr_assigned":
        attrs = a["attr"] if isinstance(a["attr"], list) else [a["attr"]]
        classes = walk_named(tree, ast.ClassDef, a["class"])
        found = set()
        for cls in classes:
            for n in ast.walk(cls):
                if isinstance(n, ast.Assign):
                    for t in n.targets:
                        if isinstance(t, ast.Attribute):
                            found.add(t.attr)
        return bool(classes) and all(x in found for x in attrs)
    if kind == "function_signature":
        fns = (ast.FunctionDef, ast.AsyncFunctionDef)
        in_class = bool(a.get("scope", {}).get("class"))
        for root in scope_nodes(tree, a.get("scope")):
            for n in ast.walk(root):
                if not (isinstance(n, fns) and n.name == a["function"]):
                    continue
                args = n.args.posonlyargs + n.args.args
                want = a["params"]
                if in_class and args and args[0].arg in ("self", "cls") and not (want and want[0].get("name") == args[0].arg):
                    args = args[1:]
                if len(args) != len(want):
                    continue
                ok = all(
                    ("name" not in w or w["name"] == g.arg)
                    and ("annotation" not in w or ann_id(g.annotation) == w["annotation"])
                    for w, g in zip(want, args)
                )
                if ok and "returns" in a and ann_id(n.returns) != a["returns"]:
                    ok = False
                if ok:
                    return True
        return False
    if kind == "method_defined":
        fns = (ast.FunctionDef, ast.AsyncFunctionDef)
        return any(walk_named(c, fns, a["method"]) for c in walk_named(tree, ast.ClassDef, a["class"]))
    if kind == "call_arg_matches":
        for root in scope_nodes(tree, a.get("scope")):
            for n in ast.walk(root):
                if isinstance(n, ast.Call) and isinstance(n.func, ast.Name) and n.func.id == a["callee"]:
                    if "arg_count" in a and len(n.args) != a["arg_count"]:
                        continue
                    idx = a.get("arg_index", 0)
                    if idx < len(n.args) and match_arg(n.args[idx], a["matcher"]):
                        return True
        return False
    if kind == "call_keyword":
        for root in scope_nodes(tree, a.get("scope")):
            for n in ast.walk(root):
                if isinstance(n, ast.Call) and isinstance(n.func, ast.Name) and n.func.id == a["callee"]:
                    for kw in n.keywords:
                        if kw.arg == a["keyword"] and ("matcher" not in a or match_arg(kw.value, a["matcher"])):
                            return True
        return False
    if kind in ("imports_from", "import_absent"):
        module = a["module"]
        level = len(module) - len(module.lstrip("."))
        bare = module.lstrip(".") or None
        names = set()
        for n in ast.walk(tree):
            if isinstance(n, ast.ImportFrom) and n.module == bare and n.level == level:
                names.update(al.name for al in n.names)
            if kind == "import_absent" and isinstance(n, ast.Import):
                names.update(al.name[len(module) + 1:] for al in n.names if al.name.startswith(module + "."))
        if kind == "imports_from":
            return all(x in names for x in a["names"])
        return a["name"] not in names
    raise ValueError(kind)


def main(suite_path, workspace):
    suite = json.load(open(suite_path))
    out = {}
    for a in suite["assertions"]:
        path = os.path.join(workspace, a["path"])
        if not os.path.exists(path):
            out[a["id"]] = "fail"
            continue
        tree = ast.parse(open(path, encoding="utf-8").read())
        out[a["id"]] = "pass" if check(a, tree) else "fail"
    json.dump(out, sys.stdout, indent=2)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main(*sys.argv[1:])
