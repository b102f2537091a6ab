"""Core twin vocabulary: node kinds, typed relations, ids and validators.

The relation signature table published here is the single source of truth
for what may connect to what; extractors, the store, the query layer and the
frontend all consume it. Ids are derived from paths and names only, so
rebuilding the same inputs always mints the same ids.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

# --------------------------------------------------------------------------
# Kinds

ARTIFACT_KINDS = frozenset({
    "file", "function", "type-definition", "module", "config-entry",
    "test-case", "build-artifact", "document",
})

KNOWLEDGE_KINDS = frozenset({
    "concept", "functionality", "responsibility", "constraint", "rationale",
})

# Pseudo-kinds for trace-edge targets; these never appear as graph nodes but
# are resolved against the trace/evidence stores during integrity checks.
TRACE_KINDS = frozenset({"revision", "issue", "evidence"})

SPANNED_KINDS = frozenset({"function", "type-definition", "test-case",
                           "config-entry"})

NODE_STATUSES = frozenset({"extracted", "curated", "disputed"})


# --------------------------------------------------------------------------
# Relation signature table

_COMPONENT = frozenset({"file", "module"})
_CALLABLE = frozenset({"function", "test-case"})

RELATION_SIGNATURES: dict[str, tuple[frozenset[str], frozenset[str]]] = {
    # artifact relations
    "contains": (_COMPONENT | {"document"},
                 frozenset({"function", "type-definition", "test-case",
                            "config-entry", "file", "module", "document"})),
    "defines": (_COMPONENT, frozenset({"function", "type-definition"})),
    "imports": (_COMPONENT | {"function"}, _COMPONENT),
    "calls": (_CALLABLE, frozenset({"function"})),
    "reads-writes": (_CALLABLE, frozenset({"file", "config-entry",
                                           "type-definition"})),
    "depends-on": (_COMPONENT | {"build-artifact"},
                   _COMPONENT | {"build-artifact"}),
    "configured-by": (_CALLABLE | _COMPONENT | {"build-artifact"},
                      frozenset({"config-entry"})),
    "built-into": (_COMPONENT, frozenset({"build-artifact"})),
    "deployed-as": (_COMPONENT | {"build-artifact"},
                    frozenset({"build-artifact"})),
    "tests": (frozenset({"test-case"}),
              frozenset({"function", "type-definition", "file", "module"})),
    # skeleton relations
    "operationalized-by": (frozenset({"concept"}), frozenset({"functionality"})),
    "requires": (frozenset({"functionality"}), frozenset({"concept"})),
    "uses": (frozenset({"functionality"}), frozenset({"concept"})),
    "decomposes-to": (frozenset({"functionality"}), frozenset({"functionality"})),
    "f-depends-on": (frozenset({"functionality"}), frozenset({"functionality"})),
    "has-responsibility": (frozenset({"functionality"}),
                           frozenset({"responsibility"})),
    "assigned-to": (frozenset({"responsibility"}), _COMPONENT),
    # rationale spine
    "constrained-by": (frozenset({"concept", "functionality", "responsibility",
                                  "function", "file", "module",
                                  "type-definition", "config-entry"}),
                       frozenset({"constraint"})),
    "justified-by": (frozenset({"file", "function", "module", "config-entry",
                                "type-definition", "test-case",
                                "functionality", "responsibility",
                                "constraint"}),
                     frozenset({"rationale"})),
    # grounding
    "implements": (frozenset({"function", "test-case", "file"}),
                   frozenset({"functionality"})),
    "owns": (_COMPONENT, frozenset({"responsibility"})),
    "g-depends-on": (frozenset({"functionality"}),
                     frozenset({"config-entry", "file", "module"})),
    # trace
    "anchored-to": (ARTIFACT_KINDS | KNOWLEDGE_KINDS,
                    frozenset({"revision", "issue"})),
    "evidenced-by": (KNOWLEDGE_KINDS, frozenset({"evidence"})),
}

ARTIFACT_RELATIONS = frozenset({
    "contains", "defines", "imports", "calls", "reads-writes", "depends-on",
    "configured-by", "built-into", "deployed-as", "tests",
})

TRACE_RELATIONS = frozenset({"anchored-to", "evidenced-by"})

ALL_RELATIONS = frozenset(RELATION_SIGNATURES)


def signature_table() -> list[dict]:
    """Machine-readable copy of the signature table, sorted by relation."""
    return [
        {"relation": name,
         "source_kinds": sorted(src),
         "target_kinds": sorted(tgt)}
        for name, (src, tgt) in sorted(RELATION_SIGNATURES.items())
    ]


# --------------------------------------------------------------------------
# Ids

def artifact_id(path: str, name: str | None = None) -> str:
    return f"a:{path}#{name}" if name else f"a:{path}"


def knowledge_id(kind: str, slug_text: str) -> str:
    return f"k:{kind}:{slug_text}"


def revision_ref(revision: str) -> str:
    return f"h:rev:{revision}"


def issue_ref(key: str) -> str:
    return f"h:issue:{key.lstrip('#')}"


def evidence_ref(evidence_id: str) -> str:
    return evidence_id if evidence_id.startswith("e:") else f"e:{evidence_id}"


def is_trace_target(node_id: str) -> bool:
    return node_id.startswith(("h:", "e:"))


# --------------------------------------------------------------------------
# Nodes and edges

class IntegrityError(ValueError):
    """Raised when an operation requires a dangling-edge-free graph."""


@dataclass(frozen=True)
class ArtifactNode:
    id: str
    kind: str
    name: str
    path: str
    span: tuple[int, int] | None = None
    visibility: str = "public"
    content_hash: str = ""

    def to_record(self) -> dict:
        rec = {
            "id": self.id, "layer": "artifact", "kind": self.kind,
            "name": self.name, "path": self.path,
            "visibility": self.visibility, "content_hash": self.content_hash,
        }
        if self.span is not None:
            rec["span"] = list(self.span)
        return rec


@dataclass(frozen=True)
class KnowledgeNode:
    id: str
    kind: str
    title: str
    summary: str = ""
    status: str = "extracted"
    confidence: float = 0.5

    def to_record(self) -> dict:
        return {
            "id": self.id, "layer": "knowledge", "kind": self.kind,
            "title": self.title, "summary": self.summary,
            "status": self.status, "confidence": self.confidence,
        }


Node = ArtifactNode | KnowledgeNode


def node_from_record(rec: Mapping) -> Node:
    if rec["layer"] == "artifact":
        span = tuple(rec["span"]) if "span" in rec else None
        return ArtifactNode(id=rec["id"], kind=rec["kind"], name=rec["name"],
                            path=rec["path"], span=span,
                            visibility=rec["visibility"],
                            content_hash=rec["content_hash"])
    return KnowledgeNode(id=rec["id"], kind=rec["kind"], title=rec["title"],
                         summary=rec.get("summary", ""),
                         status=rec.get("status", "extracted"),
                         confidence=rec.get("confidence", 0.5))


@dataclass(frozen=True)
class TypedEdge:
    source: str
    relation: str
    target: str
    attributes: tuple[tuple[str, str], ...] = ()

    @staticmethod
    def make(source: str, relation: str, target: str,
             attributes: Mapping[str, str] | None = None) -> "TypedEdge":
        attrs = tuple(sorted((attributes or {}).items()))
        return TypedEdge(source, relation, target, attrs)

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.source, self.relation, self.target)

    def attr(self, name: str) -> str | None:
        for key, value in self.attributes:
            if key == name:
                return value
        return None

    def to_record(self) -> dict:
        rec = {"source": self.source, "relation": self.relation,
               "target": self.target}
        if self.attributes:
            rec["attributes"] = dict(self.attributes)
        return rec

    @staticmethod
    def from_record(rec: Mapping) -> "TypedEdge":
        return TypedEdge.make(rec["source"], rec["relation"], rec["target"],
                              rec.get("attributes"))


# --------------------------------------------------------------------------
# Validation

@dataclass(frozen=True)
class Finding:
    subject: str
    rule: str
    message: str


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def add(self, subject: str, rule: str, message: str) -> None:
        self.findings.append(Finding(subject, rule, message))

    def extend(self, other: "ValidationReport") -> None:
        self.findings.extend(other.findings)

    def __len__(self) -> int:
        return len(self.findings)


def _edge_subject(edge: TypedEdge) -> str:
    return f"{edge.source} -{edge.relation}-> {edge.target}"


def validate_schema(nodes: Iterable[Node],
                    edges: Iterable[TypedEdge]) -> ValidationReport:
    """Check relation signatures and kind-specific field rules.

    Violations are findings, never exceptions: the report is the result.
    """
    report = ValidationReport()
    kind_by_id: dict[str, str] = {}
    for node in nodes:
        kind_by_id[node.id] = node.kind
        if isinstance(node, ArtifactNode):
            if node.kind not in ARTIFACT_KINDS:
                report.add(node.id, "unknown-kind",
                           f"unknown artifact kind {node.kind!r}")
                continue
            has_span = node.span is not None
            if has_span != (node.kind in SPANNED_KINDS):
                report.add(node.id, "span-rule",
                           f"kind {node.kind} requires span iff member kind")
            if node.span is not None and node.span[0] > node.span[1]:
                report.add(node.id, "span-rule", "span start exceeds end")
            if node.visibility not in ("public", "internal"):
                report.add(node.id, "visibility-rule",
                           f"invalid visibility {node.visibility!r}")
        else:
            if node.kind not in KNOWLEDGE_KINDS:
                report.add(node.id, "unknown-kind",
                           f"unknown knowledge kind {node.kind!r}")
                continue
            if not 0.0 <= node.confidence <= 1.0:
                report.add(node.id, "confidence-range",
                           f"confidence {node.confidence} outside [0,1]")
            if node.status not in NODE_STATUSES:
                report.add(node.id, "status-rule",
                           f"invalid status {node.status!r}")

    for edge in edges:
        sig = RELATION_SIGNATURES.get(edge.relation)
        if sig is None:
            report.add(_edge_subject(edge), "unknown-relation",
                       f"unknown relation {edge.relation!r}")
            continue
        src_kinds, tgt_kinds = sig
        src_kind = kind_by_id.get(edge.source)
        if src_kind is not None and src_kind not in src_kinds:
            report.add(_edge_subject(edge), "signature",
                       f"{edge.relation} forbids source kind {src_kind}")
        if edge.relation in TRACE_RELATIONS:
            want = "e:" if edge.relation == "evidenced-by" else "h:"
            if not edge.target.startswith(want):
                report.add(_edge_subject(edge), "signature",
                           f"{edge.relation} target must be a {want}* reference")
            continue
        tgt_kind = kind_by_id.get(edge.target)
        if tgt_kind is not None and tgt_kind not in tgt_kinds:
            report.add(_edge_subject(edge), "signature",
                       f"{edge.relation} forbids target kind {tgt_kind}")
    return report


def validate_link_integrity(
    nodes: Iterable[Node],
    edges: Iterable[TypedEdge],
    known_revisions: Iterable[str] = (),
    known_issues: Iterable[str] = (),
    known_evidence: Iterable[str] = (),
) -> ValidationReport:
    """Find dangling edges and unresolvable trace references."""
    report = ValidationReport()
    ids = {node.id for node in nodes}
    revisions = {revision_ref(r) for r in known_revisions}
    issues = {issue_ref(k) for k in known_issues}
    evidence = set(known_evidence)
    for edge in edges:
        if edge.source not in ids:
            report.add(_edge_subject(edge), "dangling-edge",
                       f"source {edge.source} absent")
        if edge.relation == "evidenced-by":
            if edge.target not in evidence:
                report.add(_edge_subject(edge), "unresolved-trace",
                           f"evidence {edge.target} not in store")
        elif edge.relation == "anchored-to":
            if edge.target not in revisions and edge.target not in issues:
                report.add(_edge_subject(edge), "unresolved-trace",
                           f"trace target {edge.target} unknown")
        elif edge.target not in ids:
            report.add(_edge_subject(edge), "dangling-edge",
                       f"target {edge.target} absent")
    return report


# --------------------------------------------------------------------------
# Canonical form

CANONICAL_HEADER = "twin-graph/1"


def _json_line(record: Mapping) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"))


def canonical_form(nodes: Iterable[Node], edges: Iterable[TypedEdge]) -> bytes:
    """Byte-stable rendering of a graph, independent of insertion order.

    Raises IntegrityError on dangling non-trace edges; trace references are
    not resolvable from the graph alone and are checked elsewhere.
    """
    node_list = sorted({n.id: n for n in nodes}.values(), key=lambda n: n.id)
    ids = {n.id for n in node_list}
    edge_set = {e.key: e for e in edges}
    for edge in edge_set.values():
        if edge.source not in ids or (
                not is_trace_target(edge.target) and edge.target not in ids):
            raise IntegrityError(f"dangling edge {_edge_subject(edge)}")
    lines = [CANONICAL_HEADER]
    lines += [_json_line(n.to_record()) for n in node_list]
    lines += [_json_line(e.to_record())
              for e in sorted(edge_set.values(), key=lambda e: e.key)]
    return ("\n".join(lines) + "\n").encode("utf-8")


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
