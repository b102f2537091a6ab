"""Stage 1: build the code-and-artifact map from a fact stream.

Ingestion is a pure fold over facts plus a source-text mapping used for
content hashes. Reference resolution is conservative: same file, then same
directory, then a unique global match; anything else is left unresolved and
flagged ambiguous rather than guessed.
"""

from __future__ import annotations

import posixpath
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .facts import DECLARE_KINDS, CodeFact
from .model import (
    ARTIFACT_RELATIONS,
    RELATION_SIGNATURES,
    ArtifactNode,
    TypedEdge,
    artifact_id,
    sha256_text,
)


class MalformedFactError(ValueError):
    pass


class ConflictingSpanError(ValueError):
    pass


@dataclass(frozen=True)
class UnresolvedRef:
    source: str
    relation: str
    symbol: str
    status: str = "unresolved"      # or "ambiguous"


@dataclass
class CodeMap:
    nodes: dict[str, ArtifactNode] = field(default_factory=dict)
    edges: set[TypedEdge] = field(default_factory=set)
    unresolved: list[UnresolvedRef] = field(default_factory=list)

    def node_ids(self) -> set[str]:
        return set(self.nodes)

    def members_of(self, path: str) -> list[ArtifactNode]:
        return [n for n in self.nodes.values()
                if n.path == path and "#" in n.id]


@dataclass(frozen=True)
class ChangedSet:
    added: frozenset[str]
    removed: frozenset[str]
    modified: frozenset[str]

    @property
    def empty(self) -> bool:
        return not (self.added or self.removed or self.modified)

    def all_ids(self) -> frozenset[str]:
        return self.added | self.removed | self.modified


def _span_text(text: str, span: tuple[int, int]) -> str:
    lines = text.split("\n")
    return "\n".join(lines[span[0] - 1:span[1]])


def _content_hash(sources: Mapping[str, str], path: str,
                  span: tuple[int, int] | None) -> str:
    text = sources.get(path)
    if text is None:
        return sha256_text("")
    if span is None:
        return sha256_text(text)
    return sha256_text(_span_text(text, span))


def ingest_facts(facts: Iterable[CodeFact],
                 sources: Mapping[str, str] | None = None) -> CodeMap:
    """Fold a fact stream into a CodeMap.

    Duplicate declares for the same (path, name, kind) are idempotent;
    the same declaration with a different span is an error. Edge facts with
    an unresolvable endpoint land in ``unresolved``.
    """
    sources = sources or {}
    cmap = CodeMap()
    spans_seen: dict[tuple[str, str, str], tuple[int, int] | None] = {}
    edge_facts: list[CodeFact] = []

    for fact in facts:
        if fact.fact_kind == "edge-fact":
            if fact.relation not in ARTIFACT_RELATIONS:
                raise MalformedFactError(
                    f"edge-fact relation {fact.relation!r} is not an "
                    "artifact relation")
            edge_facts.append(fact)
            continue
        kind = DECLARE_KINDS[fact.fact_kind]
        if fact.fact_kind == "declares-file":
            kind = fact.file_kind or "file"
            node = ArtifactNode(
                id=artifact_id(fact.path), kind=kind,
                name=posixpath.basename(fact.path), path=fact.path,
                content_hash=_content_hash(sources, fact.path, None))
        elif fact.fact_kind == "declares-module":
            node = ArtifactNode(
                id=artifact_id(fact.path), kind="module",
                name=posixpath.basename(fact.path) or fact.path,
                path=fact.path, content_hash=sha256_text(fact.path))
        else:
            dedupe_key = (fact.path, fact.name, kind)
            prior = spans_seen.get(dedupe_key)
            if prior is not None and prior != fact.span:
                raise ConflictingSpanError(
                    f"{fact.path}#{fact.name} declared with spans "
                    f"{prior} and {fact.span}")
            spans_seen[dedupe_key] = fact.span
            node = ArtifactNode(
                id=artifact_id(fact.path, fact.name), kind=kind,
                name=fact.name, path=fact.path, span=fact.span,
                visibility=fact.visibility,
                content_hash=_content_hash(sources, fact.path, fact.span))
        cmap.nodes[node.id] = node

    _synthesize_contains(cmap)

    for fact in sorted(edge_facts, key=CodeFact.sort_key):
        if fact.target:
            target_id = _resolve_locator(cmap, fact.target)
            if target_id is None:
                cmap.unresolved.append(
                    UnresolvedRef(fact.source, fact.relation, fact.target))
                continue
            source_id = _resolve_locator(cmap, fact.source)
            if source_id is None:
                cmap.unresolved.append(
                    UnresolvedRef(fact.source, fact.relation, fact.target))
                continue
            cmap.edges.add(TypedEdge.make(source_id, fact.relation, target_id))
        else:
            source_id = _resolve_locator(cmap, fact.source)
            if source_id is None:
                cmap.unresolved.append(
                    UnresolvedRef(fact.source, fact.relation, fact.symbol))
                continue
            cmap.unresolved.append(
                UnresolvedRef(source_id, fact.relation, fact.symbol))
    cmap.unresolved.sort(key=lambda u: (u.source, u.relation, u.symbol))
    return cmap


def _resolve_locator(cmap: CodeMap, locator: str) -> str | None:
    nid = locator if locator.startswith("a:") else f"a:{locator}"
    return nid if nid in cmap.nodes else None


def _synthesize_contains(cmap: CodeMap) -> None:
    """file->member containment from paths; module->child from directories."""
    by_path: dict[str, str] = {}
    for node in cmap.nodes.values():
        if "#" not in node.id:
            by_path[node.path] = node.id
    for node in cmap.nodes.values():
        if "#" in node.id:
            parent = by_path.get(node.path)
            if parent is not None:
                cmap.edges.add(TypedEdge.make(parent, "contains", node.id))
    module_paths = {n.path for n in cmap.nodes.values() if n.kind == "module"}
    for node in cmap.nodes.values():
        if "#" in node.id:
            continue
        parent_dir = posixpath.dirname(node.path)
        if parent_dir and parent_dir in module_paths and node.path != parent_dir:
            cmap.edges.add(TypedEdge.make(
                artifact_id(parent_dir), "contains", node.id))


# --------------------------------------------------------------------------
# Reference resolution

def _candidate_nodes(cmap: CodeMap, relation: str,
                     symbol: str) -> list[ArtifactNode]:
    allowed = RELATION_SIGNATURES[relation][1]
    slashed = symbol.replace(".", "/")
    out = []
    for node in sorted(cmap.nodes.values(), key=lambda n: n.id):
        if node.kind not in allowed:
            continue
        if "#" in node.id:
            if node.name == symbol:
                out.append(node)
            continue
        stem = posixpath.splitext(node.path)[0]
        basename = posixpath.splitext(posixpath.basename(node.path))[0]
        if symbol in (node.path, node.name) or slashed in (node.path, stem) \
                or symbol == basename or symbol == stem:
            out.append(node)
    return out


def resolve_references(cmap: CodeMap) -> CodeMap:
    """Resolve symbolic references: same file, same directory, unique global.

    Never removes nodes and never produces dangling edges; entries that stay
    unresolved with more than one candidate are marked ambiguous.
    """
    result = CodeMap(nodes=dict(cmap.nodes), edges=set(cmap.edges))
    for ref in cmap.unresolved:
        source = result.nodes.get(ref.source)
        if source is None:
            result.unresolved.append(ref)
            continue
        candidates = _candidate_nodes(result, ref.relation, ref.symbol)
        candidates = [c for c in candidates if c.id != ref.source]
        tiers = [
            [c for c in candidates if c.path == source.path],
            [c for c in candidates
             if posixpath.dirname(c.path) == posixpath.dirname(source.path)],
            candidates,
        ]
        chosen = None
        for tier in tiers:
            if len(tier) == 1:
                chosen = tier[0]
                break
            if len(tier) > 1:
                break
        if chosen is not None:
            result.edges.add(TypedEdge.make(
                ref.source, ref.relation, chosen.id,
                {"resolution": "resolved"}))
        elif len(candidates) > 1:
            result.unresolved.append(replace(ref, status="ambiguous"))
        else:
            result.unresolved.append(ref)
    result.unresolved.sort(key=lambda u: (u.source, u.relation, u.symbol))
    return result


# --------------------------------------------------------------------------
# Change detection

def diff_maps(old: CodeMap, new: CodeMap) -> ChangedSet:
    old_ids, new_ids = old.node_ids(), new.node_ids()
    added = new_ids - old_ids
    removed = old_ids - new_ids
    modified = {nid for nid in old_ids & new_ids
                if old.nodes[nid].content_hash != new.nodes[nid].content_hash}
    return ChangedSet(frozenset(added), frozenset(removed),
                      frozenset(modified))
