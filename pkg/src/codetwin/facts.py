"""Code-facts interchange format, version tag ``facts/1``.

One JSON record per line after the version line. Extractors for real
languages emit this format; the ingestion side never sees language syntax.
Field order inside a record is canonicalized so streams are diff-stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

FACTS_VERSION = "facts/1"

DECLARE_KINDS = {
    "declares-file": "file",
    "declares-function": "function",
    "declares-type": "type-definition",
    "declares-module": "module",
    "declares-config-entry": "config-entry",
    "declares-test": "test-case",
}

FACT_KINDS = frozenset(DECLARE_KINDS) | {"edge-fact"}


class FactFormatError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class CodeFact:
    fact_kind: str
    # declares-* fields
    path: str = ""
    name: str = ""
    span: tuple[int, int] | None = None
    visibility: str = "public"
    file_kind: str = ""          # declares-file only: "file" or "document"
    # edge-fact fields
    relation: str = ""
    source: str = ""             # locator: path or path#name
    target: str = ""             # explicit locator, empty when symbol used
    symbol: str = ""             # unresolved symbol text, empty when target used

    def sort_key(self) -> tuple:
        if self.fact_kind == "edge-fact":
            return (1, self.source, self.relation, self.target or self.symbol)
        return (0, self.path, self.span or (0, 0), self.fact_kind, self.name)

    def to_record(self) -> dict:
        if self.fact_kind == "edge-fact":
            rec = {"fact": "edge-fact", "relation": self.relation,
                   "source": self.source}
            if self.target:
                rec["target"] = self.target
            else:
                rec["symbol"] = self.symbol
            return rec
        rec = {"fact": self.fact_kind, "path": self.path}
        if self.fact_kind == "declares-file":
            rec["kind"] = self.file_kind or "file"
            return rec
        if self.fact_kind == "declares-module":
            return rec
        rec["name"] = self.name
        rec["span"] = list(self.span) if self.span else None
        rec["visibility"] = self.visibility
        return rec


def declare_file(path: str, kind: str = "file") -> CodeFact:
    return CodeFact("declares-file", path=path, file_kind=kind)


def declare_module(path: str) -> CodeFact:
    return CodeFact("declares-module", path=path)


def declare_member(fact_kind: str, path: str, name: str,
                   span: tuple[int, int], visibility: str = "public") -> CodeFact:
    return CodeFact(fact_kind, path=path, name=name, span=span,
                    visibility=visibility)


def edge_fact(relation: str, source: str, target: str = "",
              symbol: str = "") -> CodeFact:
    return CodeFact("edge-fact", relation=relation, source=source,
                    target=target, symbol=symbol)


def serialize_facts(facts: Iterable[CodeFact]) -> str:
    lines = [FACTS_VERSION]
    lines += [json.dumps(f.to_record(), sort_keys=True, ensure_ascii=False)
              for f in facts]
    return "\n".join(lines) + "\n"


def parse_facts(text: str) -> list[CodeFact]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != FACTS_VERSION:
        raise FactFormatError(f"expected version tag {FACTS_VERSION!r}", 1)
    facts = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FactFormatError(f"malformed record: {exc.msg}", lineno)
        facts.append(_fact_from_record(rec, lineno))
    return facts


def _fact_from_record(rec: dict, lineno: int) -> CodeFact:
    kind = rec.get("fact")
    if kind not in FACT_KINDS:
        raise FactFormatError(f"unknown fact kind {kind!r}", lineno)
    if kind == "edge-fact":
        if not rec.get("relation") or not rec.get("source"):
            raise FactFormatError("edge-fact needs relation and source", lineno)
        if not rec.get("target") and not rec.get("symbol"):
            raise FactFormatError("edge-fact needs target or symbol", lineno)
        return edge_fact(rec["relation"], rec["source"],
                         rec.get("target", ""), rec.get("symbol", ""))
    path = rec.get("path")
    if not path:
        raise FactFormatError(f"{kind} needs a path", lineno)
    if kind == "declares-file":
        file_kind = rec.get("kind", "file")
        if file_kind not in ("file", "document", "build-artifact"):
            raise FactFormatError(f"bad file kind {file_kind!r}", lineno)
        return declare_file(path, file_kind)
    if kind == "declares-module":
        return declare_module(path)
    name = rec.get("name")
    span = rec.get("span")
    if not name or not span:
        raise FactFormatError(f"{kind} needs name and span", lineno)
    return declare_member(kind, path, name, (int(span[0]), int(span[1])),
                          rec.get("visibility", "public"))
