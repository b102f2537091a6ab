"""Fact extractors: a source tree goes in, a deterministic fact stream comes out.

The shipped tree extractor understands Python at file/function/import/
call-by-name granularity, flat ``.cfg``/``.ini`` config files, and prose
documents. Everything else becomes a bare file node. A pass-through
extractor accepts the facts format itself, so synthetic repos never need a
parser.
"""

from __future__ import annotations

import ast
import posixpath
import re
from pathlib import Path
from typing import Callable, Mapping

from . import facts as f

DOCUMENT_SUFFIXES = {".md", ".rst", ".txt"}
CONFIG_SUFFIXES = {".cfg", ".ini"}

_CONFIG_LINE = re.compile(r"^\s*([A-Za-z0-9_.\-]+)\s*=")
_CONFIG_SECTION = re.compile(r"^\s*\[([A-Za-z0-9_.\-]+)\]\s*$")


class UnknownExtractorError(ValueError):
    pass


class UnreadablePathError(OSError):
    pass


def load_sources(root: str | Path) -> dict[str, str]:
    """Read every regular file under root as UTF-8 text, keyed by posix path."""
    rootp = Path(root)
    if not rootp.is_dir():
        raise UnreadablePathError(f"not a readable directory: {root}")
    sources: dict[str, str] = {}
    for path in sorted(rootp.rglob("*")):
        if not path.is_file():
            continue
        rel = path.relative_to(rootp).as_posix()
        try:
            sources[rel] = path.read_text(encoding="utf-8", errors="replace")
        except OSError as exc:
            raise UnreadablePathError(f"cannot read {rel}: {exc}") from exc
    return sources


def _is_test_path(path: str) -> bool:
    parts = path.split("/")
    return parts[0] in ("test", "tests") or \
        posixpath.basename(path).startswith("test_") or \
        posixpath.splitext(posixpath.basename(path))[0].endswith("_test")


def _config_entries(path: str, text: str) -> list[f.CodeFact]:
    out = []
    section = ""
    for lineno, line in enumerate(text.split("\n"), start=1):
        m = _CONFIG_SECTION.match(line)
        if m:
            section = m.group(1)
            continue
        m = _CONFIG_LINE.match(line)
        if m:
            key = f"{section}.{m.group(1)}" if section else m.group(1)
            out.append(f.declare_member("declares-config-entry", path, key,
                                        (lineno, lineno)))
    return out


def _python_facts(path: str, text: str,
                  config_keys: Mapping[str, list[tuple[str, str]]]
                  ) -> list[f.CodeFact]:
    try:
        tree = ast.parse(text)
    except SyntaxError:
        return []
    out: list[f.CodeFact] = []
    in_test_file = _is_test_path(path)
    for stmt in tree.body:
        if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
            is_test = in_test_file and stmt.name.startswith("test")
            kind = "declares-test" if is_test else "declares-function"
            visibility = "internal" if stmt.name.startswith("_") else "public"
            span = (stmt.lineno, stmt.end_lineno or stmt.lineno)
            out.append(f.declare_member(kind, path, stmt.name, span,
                                        visibility))
            locator = f"{path}#{stmt.name}"
            relation = "tests" if is_test else "calls"
            for callee in sorted(_called_names(stmt)):
                out.append(f.edge_fact(relation, locator, symbol=callee))
            body_text = "\n".join(
                text.split("\n")[span[0] - 1:span[1]])
            matched: set[tuple[str, str]] = set()
            loose: set[str] = set()
            for token in sorted(config_keys):
                if not _contains_token(body_text, token):
                    continue
                declaring = config_keys[token]
                if len(declaring) == 1:
                    matched.add(declaring[0])
                else:
                    loose.add(token)
            for path_and_key in sorted(matched):
                out.append(f.edge_fact("configured-by", locator,
                                       target="{}#{}".format(*path_and_key)))
            for token in sorted(loose):
                out.append(f.edge_fact("configured-by", locator,
                                       symbol=token))
        elif isinstance(stmt, ast.ClassDef):
            span = (stmt.lineno, stmt.end_lineno or stmt.lineno)
            visibility = "internal" if stmt.name.startswith("_") else "public"
            out.append(f.declare_member("declares-type", path, stmt.name,
                                        span, visibility))
        elif isinstance(stmt, ast.Import):
            for alias in stmt.names:
                out.append(f.edge_fact(
                    "imports", path,
                    symbol=alias.name.replace(".", "/")))
        elif isinstance(stmt, ast.ImportFrom) and stmt.module:
            out.append(f.edge_fact("imports", path,
                                   symbol=stmt.module.replace(".", "/")))
    return out


def _called_names(func: ast.AST) -> set[str]:
    names = set()
    for node in ast.walk(func):
        if isinstance(node, ast.Call):
            target = node.func
            if isinstance(target, ast.Name):
                names.add(target.id)
            elif isinstance(target, ast.Attribute):
                names.add(target.attr)
    return names


def _contains_token(text: str, key: str) -> bool:
    pattern = r"(?<![A-Za-z0-9_.])" + re.escape(key) + r"(?![A-Za-z0-9_.])"
    return re.search(pattern, text) is not None


def extract_tree(sources: Mapping[str, str]) -> list[f.CodeFact]:
    """The default extractor: dispatch per file suffix over a source map."""
    out: list[f.CodeFact] = []
    # token -> declaring (path, full key); both dotted and bare forms match
    config_keys: dict[str, list[tuple[str, str]]] = {}
    for path in sorted(sources):
        if posixpath.splitext(path)[1] in CONFIG_SUFFIXES:
            for fact in _config_entries(path, sources[path]):
                entry = (path, fact.name)
                for token in {fact.name, fact.name.rsplit(".", 1)[-1]}:
                    bucket = config_keys.setdefault(token, [])
                    if entry not in bucket:
                        bucket.append(entry)

    directories: set[str] = set()
    for path in sorted(sources):
        parent = posixpath.dirname(path)
        while parent:
            directories.add(parent)
            parent = posixpath.dirname(parent)

    for directory in sorted(directories):
        out.append(f.declare_module(directory))

    for path in sorted(sources):
        text = sources[path]
        suffix = posixpath.splitext(path)[1]
        if suffix in DOCUMENT_SUFFIXES:
            out.append(f.declare_file(path, "document"))
        else:
            out.append(f.declare_file(path, "file"))
        if suffix == ".py":
            out.extend(_python_facts(path, text, config_keys))
        elif suffix in CONFIG_SUFFIXES:
            out.extend(_config_entries(path, text))
    return sorted(out, key=f.CodeFact.sort_key)


def extract_passthrough(sources: Mapping[str, str]) -> list[f.CodeFact]:
    """Parse every ``*.facts`` document in the map and merge the streams."""
    out: list[f.CodeFact] = []
    for path in sorted(sources):
        if path.endswith(".facts"):
            out.extend(f.parse_facts(sources[path]))
    return sorted(out, key=f.CodeFact.sort_key)


EXTRACTORS: dict[str, Callable[[Mapping[str, str]], list[f.CodeFact]]] = {
    "tree": extract_tree,
    "facts": extract_passthrough,
}


def extract_facts(source: str | Path | Mapping[str, str],
                  extractor: str = "tree") -> list[f.CodeFact]:
    """Run a registered extractor over a directory or source map."""
    fn = EXTRACTORS.get(extractor)
    if fn is None:
        raise UnknownExtractorError(f"unknown extractor {extractor!r}")
    sources = source if isinstance(source, Mapping) else load_sources(source)
    return fn(sources)
