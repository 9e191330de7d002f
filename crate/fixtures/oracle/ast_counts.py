"""Count syntax-node kinds with CPython's own ast module.

Independent reference for the Rust parser: each taxonomy kind is mapped to
the CPython node classes it stands for. Constants are left out because
f-string literal fragments are modelled differently.

usage: python3 ast_counts.py ROOT [ROOT...]  > counts.json
"""
import ast
import json
import pathlib
import sys

KINDS = {
    "ClassDef": (ast.ClassDef,),
    "FunctionDef": (ast.FunctionDef, ast.AsyncFunctionDef),
    "Assign": (ast.Assign,),
    "Attribute": (ast.Attribute,),
    "Name": (ast.Name,),
    "Call": (ast.Call,),
    "KeywordArg": (ast.keyword,),
    "ImportFrom": (ast.ImportFrom,),
    "Import": (ast.Import,),
    "Parameter": (ast.arg,),
}


def count(source):
    tree = ast.parse(source)
    out = {k: 0 for k in KINDS}
    for node in ast.walk(tree):
        for kind, classes in KINDS.items():
            if isinstance(node, classes):
                out[kind] += 1
    return out


def main(roots):
    result = {}
    for root in roots:
        root = pathlib.Path(root)
        for path in sorted(root.rglob("*.py")):
            key = path.relative_to(root.parent).as_posix()
            result[key] = count(path.read_text(encoding="utf-8"))
    json.dump(result, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main(sys.argv[1:])
