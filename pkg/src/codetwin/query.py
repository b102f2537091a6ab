"""Graph-first retrieval over a twin snapshot.

A query resolves to seed entities by token overlap, expands a bounded
neighborhood along a relation filter, then ranks and admits nodes under a
node budget. Admission is a fixed sequence cut at the budget, so growing the
budget only ever appends results. Constraints and rationales adjacent to an
admitted node ride along immediately behind it; surfacing the "why" next to
the "what" is the point of the graph detour.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .extraction import KnowledgeCard
from .model import ArtifactNode, KnowledgeNode, TypedEdge
from .store import TwinSnapshot
from .textutil import token_set

QRES_VERSION = "qres/1"

# relations walked by default; contains/imports stay out so expansion follows
# behavior and meaning rather than directory shape
DEFAULT_QUERY_RELATIONS = frozenset({
    "calls", "depends-on", "configured-by", "tests", "implements",
    "has-responsibility", "constrained-by", "justified-by",
})

SPINE_RELATIONS = frozenset({"constrained-by", "justified-by"})

# cross-file fan-in along these relations marks a node as a boundary
_BOUNDARY_RELATIONS = frozenset({"imports", "calls", "tests", "depends-on"})


class EmptyQueryError(ValueError):
    pass


class UnknownNodeError(KeyError):
    pass


@dataclass(frozen=True)
class QuerySpec:
    text: str
    revision: str | None = None
    hop_bound: int = 2
    node_budget: int = 40
    seed_limit: int = 3
    relations: frozenset[str] = DEFAULT_QUERY_RELATIONS

    @staticmethod
    def from_record(rec: Mapping) -> "QuerySpec":
        return QuerySpec(
            text=rec["text"], revision=rec.get("revision"),
            hop_bound=int(rec.get("hop_bound", 2)),
            node_budget=int(rec.get("node_budget", 40)),
            seed_limit=int(rec.get("seed_limit", 3)),
            relations=frozenset(rec.get("relations",
                                        DEFAULT_QUERY_RELATIONS)))


@dataclass(frozen=True)
class ScoredNode:
    id: str
    score: float
    hop: int


@dataclass
class QueryResult:
    revision: str
    query: str
    seeds: list[str]
    nodes: list[ScoredNode]                 # admission order
    edges: list[TypedEdge]                  # induced, filtered subgraph

    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def to_record(self) -> dict:
        return {
            "version": QRES_VERSION, "kind": "query",
            "revision": self.revision, "query": self.query,
            "seeds": self.seeds,
            "nodes": [{"id": n.id, "score": round(n.score, 6), "hop": n.hop}
                      for n in self.nodes],
            "edges": [e.to_record() for e in self.edges],
        }

    def serialize(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True,
                          ensure_ascii=False, indent=1) + "\n"


# --------------------------------------------------------------------------
# Entity resolution

def _match_text(node) -> str:
    if isinstance(node, ArtifactNode):
        return f"{node.name} {node.path}"
    return f"{node.title} {node.summary}"


def resolve_entities(snapshot: TwinSnapshot, text: str,
                     limit: int = 3) -> list[tuple[str, float]]:
    """Top entities by stemmed-token overlap with the query, ties by id."""
    query_tokens = token_set(text)
    if not query_tokens:
        raise EmptyQueryError("query has no tokens")
    scored = []
    for node in snapshot.nodes.values():
        overlap = query_tokens & token_set(_match_text(node))
        if overlap:
            scored.append((node.id, len(overlap) / len(query_tokens)))
    scored.sort(key=lambda s: (-s[1], s[0]))
    return scored[:limit]


# --------------------------------------------------------------------------
# Expansion

def expand_subgraph(snapshot: TwinSnapshot, seeds: Sequence[str],
                    hop_bound: int,
                    relations: frozenset[str] = DEFAULT_QUERY_RELATIONS
                    ) -> dict[str, int]:
    """Undirected BFS from the seeds; returns node id -> hop distance."""
    for seed in seeds:
        if seed not in snapshot.nodes:
            raise UnknownNodeError(seed)
    adjacency: dict[str, set[str]] = {}
    for edge in snapshot.edges:
        if edge.relation not in relations:
            continue
        if edge.source in snapshot.nodes and edge.target in snapshot.nodes:
            adjacency.setdefault(edge.source, set()).add(edge.target)
            adjacency.setdefault(edge.target, set()).add(edge.source)
    hops = {seed: 0 for seed in sorted(set(seeds))}
    frontier = sorted(hops)
    depth = 0
    while frontier and depth < hop_bound:
        depth += 1
        nxt = []
        for node in frontier:
            for neighbor in sorted(adjacency.get(node, ())):
                if neighbor not in hops:
                    hops[neighbor] = depth
                    nxt.append(neighbor)
        frontier = nxt
    return hops


# --------------------------------------------------------------------------
# Ranking and admission

def _boundary_ids(snapshot: TwinSnapshot) -> set[str]:
    out = set()
    for edge in snapshot.edges:
        if edge.relation not in _BOUNDARY_RELATIONS:
            continue
        src = snapshot.nodes.get(edge.source)
        tgt = snapshot.nodes.get(edge.target)
        if isinstance(src, ArtifactNode) and isinstance(tgt, ArtifactNode) \
                and src.path != tgt.path:
            out.add(edge.target)
    return out


def _constraint_path_ids(snapshot: TwinSnapshot) -> set[str]:
    out = set()
    for node in snapshot.nodes.values():
        if isinstance(node, KnowledgeNode) and node.kind == "constraint":
            out.add(node.id)
    for edge in snapshot.edges:
        if edge.relation == "constrained-by":
            out.add(edge.source)
            out.add(edge.target)
    return out


def rank_subgraph(snapshot: TwinSnapshot,
                  hops: Mapping[str, int]) -> list[ScoredNode]:
    """Score 3*boundary + 2*public + 2*on-constraint-path + 1/(1+hop)."""
    boundary = _boundary_ids(snapshot)
    constrained = _constraint_path_ids(snapshot)
    out = []
    for node_id, hop in hops.items():
        node = snapshot.nodes[node_id]
        is_public = isinstance(node, ArtifactNode) and \
            node.visibility == "public"
        score = 3.0 * (node_id in boundary) + 2.0 * is_public \
            + 2.0 * (node_id in constrained) + 1.0 / (1.0 + hop)
        out.append(ScoredNode(node_id, score, hop))
    out.sort(key=lambda s: (-s.score, s.hop, s.id))
    return out


def admission_sequence(snapshot: TwinSnapshot,
                       ranked: Sequence[ScoredNode]) -> list[ScoredNode]:
    """Rank order, with each node's spine neighbors pulled in right after it."""
    by_id = {s.id: s for s in ranked}
    spine: dict[str, set[str]] = {}
    for edge in snapshot.edges:
        if edge.relation in SPINE_RELATIONS:
            if edge.source in by_id and edge.target in by_id:
                spine.setdefault(edge.source, set()).add(edge.target)
    sequence: list[ScoredNode] = []
    placed: set[str] = set()
    for scored in ranked:
        if scored.id in placed:
            continue
        sequence.append(scored)
        placed.add(scored.id)
        for neighbor in sorted(spine.get(scored.id, ())):
            if neighbor not in placed:
                sequence.append(by_id[neighbor])
                placed.add(neighbor)
    return sequence


def run_query(snapshot: TwinSnapshot, spec: QuerySpec) -> QueryResult:
    seeds = [nid for nid, _ in
             resolve_entities(snapshot, spec.text, spec.seed_limit)]
    hops = expand_subgraph(snapshot, seeds, spec.hop_bound, spec.relations) \
        if seeds else {}
    ranked = rank_subgraph(snapshot, hops)
    admitted = admission_sequence(snapshot, ranked)[: spec.node_budget]
    kept = {s.id for s in admitted}
    edges = sorted(
        (e for e in snapshot.edges
         if e.relation in spec.relations
         and e.source in kept and e.target in kept),
        key=lambda e: e.key)
    return QueryResult(snapshot.revision, spec.text, seeds, admitted, edges)


# --------------------------------------------------------------------------
# Impact analysis

_IMPACT_RELATIONS = frozenset({"calls", "depends-on", "configured-by",
                               "imports"})


@dataclass
class ImpactResult:
    revision: str
    changed: list[str]
    impacted: list[ScoredNode] = field(default_factory=list)  # hop order
    tests: list[str] = field(default_factory=list)
    constraints: list[str] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "version": QRES_VERSION, "kind": "impact",
            "revision": self.revision, "changed": self.changed,
            "impacted": [{"id": n.id, "hop": n.hop} for n in self.impacted],
            "tests": self.tests, "constraints": self.constraints,
        }

    def serialize(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True,
                          ensure_ascii=False, indent=1) + "\n"


def impact_of_change(snapshot: TwinSnapshot, changed: Sequence[str],
                     hop_bound: int = 3) -> ImpactResult:
    """Who is downstream of a change, which tests cover it, what it must obey.

    Walks dependency edges in reverse (towards dependents), then reports the
    test cases exercising and the constraints governing anything reached.
    """
    for node_id in changed:
        if node_id not in snapshot.nodes:
            raise UnknownNodeError(node_id)
    dependents: dict[str, set[str]] = {}
    for edge in snapshot.edges:
        if edge.relation in _IMPACT_RELATIONS:
            dependents.setdefault(edge.target, set()).add(edge.source)
    hops = {nid: 0 for nid in sorted(set(changed))}
    frontier = sorted(hops)
    depth = 0
    while frontier and depth < hop_bound:
        depth += 1
        nxt = []
        for node in frontier:
            for dep in sorted(dependents.get(node, ())):
                if dep not in hops:
                    hops[dep] = depth
                    nxt.append(dep)
        frontier = nxt
    reached = set(hops)
    tests = set()
    constraints = set()
    for edge in snapshot.edges:
        if edge.relation == "tests" and edge.target in reached:
            tests.add(edge.source)
        elif edge.relation == "constrained-by" and edge.source in reached:
            constraints.add(edge.target)
    impacted = [ScoredNode(nid, 0.0, hop)
                for nid, hop in sorted(hops.items(),
                                       key=lambda kv: (kv[1], kv[0]))
                if nid not in set(changed)]
    return ImpactResult(snapshot.revision, sorted(set(changed)), impacted,
                        sorted(tests), sorted(constraints))


def card_for(snapshot: TwinSnapshot, subject: str) -> KnowledgeCard:
    card = snapshot.cards.get(subject)
    if card is None:
        raise UnknownNodeError(subject)
    return card
