"""Record where CPython rejects each ill-formed snippet.

usage: python3 invalid_sources.py > invalid.json
"""
import json
import sys

SNIPPETS = [
    "def f(:",
    "x = (1,",
    "if x\n    pass\n",
    "class\n",
    "return = 1\n",
    "f() = 3\n",
    "  x = 1\n",
    "def f():\nreturn 1\n",
    "x = 'unterminated\n",
    "a b\n",
    "1 +\n",
    "import\n",
    "from x import\n",
    "del 1\n",
    "(a, b) += 1\n",
    "x = [1, 2\ny = 3\n",
    "def f():\n    pass\n  x = 1\n",
    "for x in :\n    pass\n",
    "s = 'a' b'b'\n",
    "lambda x: = 1\n",
    "x = )\n",
    "print 'hello'\n",
    "try:\n    pass\n",
    "else:\n    pass\n",
    "x = 1 if y\n",
    "def f(a=1, b):\n    pass\n",
    "@dec\nx = 1\n",
    "x = \"\"\"never closed\n",
    "f(**k, *a)\n",
    "a = 1 = 2\n",
]


def main():
    out = []
    for src in SNIPPETS:
        try:
            compile(src, "<snippet>", "exec", dont_inherit=True, flags=0x400)  # PyCF_ONLY_AST
        except SyntaxError as err:
            out.append({"source": src, "line": err.lineno})
        else:
            raise SystemExit(f"snippet unexpectedly parsed: {src!r}")
    json.dump(out, sys.stdout, indent=2)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
