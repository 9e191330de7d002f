"""Independent recomputation of the corpus statistics sheet.

Word count is the number of whitespace-delimited tokens; a file's line count
is its number of newline bytes plus one for a non-empty unterminated last
line. Aggregates are taken over tasks (a repository shared by two tasks
counts twice).

usage: python3 corpus_stats.py MANIFEST.json > stats.json
"""
import json
import os
import re
import sys


def lines_of(data):
    n = data.count(b"\n")
    if data and not data.endswith(b"\n"):
        n += 1
    return n


def tree_files(root):
    out = []
    for d, _, fs in os.walk(root):
        for f in fs:
            p = os.path.join(d, f)
            if os.path.isfile(p) and not os.path.islink(p):
                out.append(p)
    return out


def agg(values):
    return {"mean": sum(values) / len(values), "max": max(values)}


def main(manifest_path):
    base = os.path.dirname(os.path.abspath(manifest_path))
    m = json.load(open(manifest_path))
    repos = {r["repo_id"]: os.path.join(base, r["snapshot"]) for r in m["repos"]}
    cols = {k: [] for k in ["lazy_words", "base_words", "descriptive_words", "repo_files", "repo_lines",
                            "suite_length", "suite_lines", "target_files", "reference_files_edited"]}
    for t in m["tasks"]:
        ins = t["instructions"]
        cols["lazy_words"].append(len(ins["lazy"].split()))
        cols["base_words"].append(len(ins["base"].split()))
        cols["descriptive_words"].append(len(ins["descriptive"].split()))
        files = tree_files(repos[t["repo_id"]])
        cols["repo_files"].append(len(files))
        cols["repo_lines"].append(sum(lines_of(open(f, "rb").read()) for f in files))
        suite_path = os.path.join(base, t["suite"])
        suite = json.load(open(suite_path))
        cols["suite_length"].append(len(suite["assertions"]))
        cols["suite_lines"].append(lines_of(open(suite_path, "rb").read()))
        cols["target_files"].append(len({a["path"] for a in suite["assertions"]}))
        diff = open(os.path.join(base, t["reference_patch"])).read()
        touched = set(re.findall(r"^\+\+\+ b/(\S+)", diff, re.M))
        cols["reference_files_edited"].append(len(touched))
    out = {"tasks": len(m["tasks"]), "repos": len(m["repos"])}
    out.update({k: agg(v) for k, v in cols.items()})
    json.dump(out, sys.stdout, indent=2)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main(sys.argv[1])
