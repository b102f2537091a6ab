"""Compile a ranked subgraph into a token-budgeted context package (ctx/1).

Sections are atomic: a section is either in the package whole or evicted
whole, and admission is a prefix cut over a deterministic section order, so
raising the budget can only append sections. Constraint cards outrank
everything else; a consumer that reads only the first section still sees the
rule it is most likely to break.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .model import ArtifactNode, KnowledgeNode
from .query import QueryResult, _boundary_ids
from .store import TwinSnapshot

CTX_VERSION = "ctx/1"

SECTION_KINDS = ("interface-and-constraint", "implementation", "peripheral",
                 "evidence")
_KIND_ORDER = {kind: i for i, kind in enumerate(SECTION_KINDS)}

_PERIPHERAL_ARTIFACTS = frozenset({"module", "document", "config-entry",
                                   "test-case", "build-artifact"})


class BudgetTooSmallError(ValueError):
    def __init__(self, budget: int, needed: int):
        super().__init__(
            f"token budget {budget} cannot fit the first section "
            f"({needed} tokens)")
        self.budget = budget
        self.needed = needed


def estimate_tokens(text: str) -> int:
    """Four characters per token, rounded up; zero only for empty text."""
    return (len(text) + 3) // 4


@dataclass(frozen=True)
class Section:
    kind: str
    subject: str
    title: str
    body: str

    @property
    def tokens(self) -> int:
        return estimate_tokens(self.body)

    def to_record(self) -> dict:
        return {"kind": self.kind, "subject": self.subject,
                "title": self.title, "tokens": self.tokens,
                "body": self.body}


@dataclass
class ContextPackage:
    revision: str
    query: str
    budget: int
    sections: list[Section]
    evicted: list[dict]                     # subject, kind, tokens, reason
    warnings: list[str] = field(default_factory=list)

    @property
    def tokens(self) -> int:
        return sum(s.tokens for s in self.sections)

    def manifest(self) -> dict:
        return {
            "admitted": [{"subject": s.subject, "kind": s.kind,
                          "tokens": s.tokens} for s in self.sections],
            "evicted": self.evicted,
        }

    def to_record(self) -> dict:
        return {
            "version": CTX_VERSION, "revision": self.revision,
            "query": self.query, "budget": self.budget,
            "tokens": self.tokens,
            "manifest": self.manifest(),
            "sections": [s.to_record() for s in self.sections],
            "warnings": self.warnings,
        }

    def serialize(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True,
                          ensure_ascii=False, indent=1) + "\n"


# a validation hook inspects the finished package and returns finding strings
ValidationHook = Callable[[ContextPackage], Iterable[str]]


# --------------------------------------------------------------------------
# Section bodies

def _member_source(snapshot: TwinSnapshot, node: ArtifactNode) -> list[str]:
    text = snapshot.sources.get(node.path)
    if text is None or node.span is None:
        return []
    lines = text.split("\n")
    return lines[node.span[0] - 1: node.span[1]]


def _artifact_section(snapshot: TwinSnapshot, node: ArtifactNode,
                      boundary: bool) -> Section:
    lines = [f"ARTIFACT {node.id}", f"kind: {node.kind}",
             f"path: {node.path}", f"visibility: {node.visibility}"]
    if node.span is not None:
        lines.append(f"span: {node.span[0]}-{node.span[1]}")
    source = _member_source(snapshot, node)
    if node.kind in _PERIPHERAL_ARTIFACTS:
        kind = "peripheral"
    elif boundary:
        kind = "interface-and-constraint"
        if source:
            lines.append(f"signature: {source[0].strip()}")
        elif "#" not in node.id:
            members = sorted(n.name for n in snapshot.nodes.values()
                             if isinstance(n, ArtifactNode)
                             and n.path == node.path and "#" in n.id)
            if members:
                lines.append("members: " + ", ".join(members))
    else:
        kind = "implementation"
        lines += source
    return Section(kind, node.id, node.name, "\n".join(lines))


def _knowledge_section(snapshot: TwinSnapshot,
                       node: KnowledgeNode) -> Section:
    card = snapshot.cards.get(node.id)
    lines = [card.render().rstrip("\n")] if card else \
        [f"CARD {node.id}", f"{node.kind}: {node.title}"]
    evidence_ids = card.evidence_ids if card else ()
    for eid in evidence_ids:
        frag = snapshot.evidence.get(eid)
        if frag is not None:
            lines.append(f'> "{frag.quote}" ({frag.source_kind} '
                         f'{frag.source_key} @{frag.revision})')
    return Section("interface-and-constraint", node.id, node.title,
                   "\n".join(lines))


def _evidence_section(snapshot: TwinSnapshot, evidence_id: str) -> Section:
    frag = snapshot.evidence[evidence_id]
    lines = [f"EVIDENCE {frag.id}",
             f"source: {frag.source_kind} {frag.source_key}",
             f"offsets: {frag.start}-{frag.end}",
             f"revision: {frag.revision}",
             f'quote: "{frag.quote}"']
    return Section("evidence", frag.id, frag.id, "\n".join(lines))


# --------------------------------------------------------------------------
# Ordering and admission

def build_sections(snapshot: TwinSnapshot,
                   result: QueryResult) -> list[Section]:
    """All candidate sections for an admitted subgraph, in package order."""
    boundary = _boundary_ids(snapshot)
    scores = {n.id: n.score for n in result.nodes}
    sections: list[Section] = []
    evidence_ids: set[str] = set()
    for scored in result.nodes:
        node = snapshot.nodes[scored.id]
        if isinstance(node, ArtifactNode):
            sections.append(_artifact_section(snapshot, node,
                                              node.id in boundary))
        else:
            sections.append(_knowledge_section(snapshot, node))
            card = snapshot.cards.get(node.id)
            if card:
                evidence_ids.update(e for e in card.evidence_ids
                                    if e in snapshot.evidence)
    sections += [_evidence_section(snapshot, eid)
                 for eid in sorted(evidence_ids)]

    def order_key(section: Section) -> tuple:
        node = snapshot.nodes.get(section.subject)
        constraint_first = 1
        if section.kind == "interface-and-constraint" and \
                isinstance(node, KnowledgeNode) and node.kind == "constraint":
            constraint_first = 0
        return (_KIND_ORDER[section.kind], constraint_first,
                -scores.get(section.subject, 0.0), section.subject)

    sections.sort(key=order_key)
    return sections


def compile_package(snapshot: TwinSnapshot, result: QueryResult,
                    token_budget: int,
                    hooks: Sequence[ValidationHook] = ()) -> ContextPackage:
    """Prefix-cut the ordered sections at the token budget."""
    ordered = build_sections(snapshot, result)
    if ordered and ordered[0].tokens > token_budget:
        raise BudgetTooSmallError(token_budget, ordered[0].tokens)
    admitted: list[Section] = []
    evicted: list[dict] = []
    spent = 0
    cut = False
    for section in ordered:
        if not cut and spent + section.tokens <= token_budget:
            admitted.append(section)
            spent += section.tokens
        else:
            cut = True
            evicted.append({"subject": section.subject,
                            "kind": section.kind,
                            "tokens": section.tokens,
                            "reason": "over-budget"})
    package = ContextPackage(snapshot.revision, result.query, token_budget,
                             admitted, evicted)
    for hook in hooks:
        package.warnings.extend(hook(package))
    return package
