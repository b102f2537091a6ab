"""Stages 2-4: skeleton extraction, rationale mining, reflection links, cards.

The shipped extractors are deterministic heuristics (heading rule, cue
lexicons, call-graph components, token-overlap linking) sitting behind a
hook seam where a smarter extractor can be substituted. Every knowledge node
leaves this module with at least one verbatim, revision-pinned evidence
fragment; claims without evidence are never emitted.

Derivation is organized in independent units (one per document, one for the
call-graph layer, one per change record, one per issue) so the store can
re-derive only impacted units during incremental updates and still arrive at
the exact bytes a full rebuild produces.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .artifact_map import CodeMap
from .history import ChangeRecord, IssueRecord
from .model import (
    RELATION_SIGNATURES,
    KnowledgeNode,
    Node,
    TypedEdge,
    knowledge_id,
    revision_ref,
)
from .textutil import raw_tokens, sentence_spans, slug, token_set

LEX_VERSION = "lex/1"


# --------------------------------------------------------------------------
# Cue lexicon

@dataclass(frozen=True)
class Lexicon:
    causal: tuple[str, ...]
    modal: tuple[str, ...]

    def has_causal(self, sentence: str) -> bool:
        return _has_cue(sentence, self.causal)

    def has_modal(self, sentence: str) -> bool:
        return _has_cue(sentence, self.modal)


DEFAULT_LEXICON = Lexicon(
    causal=("because", "due to", "so that", "workaround"),
    modal=("must", "never", "cannot", "require", "requires", "required",
           "shall"),
)


def _has_cue(sentence: str, cues: tuple[str, ...]) -> bool:
    lowered = sentence.lower()
    tokens = set(raw_tokens(sentence))
    for cue in cues:
        if " " in cue:
            if re.search(r"\b" + re.escape(cue) + r"\b", lowered):
                return True
        elif cue in tokens:
            return True
    return False


def serialize_lexicon(lex: Lexicon) -> str:
    lines = [LEX_VERSION, "[causal]"]
    lines += list(lex.causal)
    lines.append("[modal]")
    lines += list(lex.modal)
    return "\n".join(lines) + "\n"


def parse_lexicon(text: str) -> Lexicon:
    lines = [ln.strip() for ln in text.splitlines()]
    if not lines or lines[0] != LEX_VERSION:
        raise ValueError(f"expected version tag {LEX_VERSION!r}")
    section = None
    buckets: dict[str, list[str]] = {"causal": [], "modal": []}
    for line in lines[1:]:
        if not line:
            continue
        if line in ("[causal]", "[modal]"):
            section = line[1:-1]
            continue
        if section is None:
            raise ValueError(f"cue {line!r} outside a section")
        buckets[section].append(line)
    return Lexicon(tuple(buckets["causal"]), tuple(buckets["modal"]))


# --------------------------------------------------------------------------
# Evidence

@dataclass(frozen=True)
class EvidenceFragment:
    id: str
    source_kind: str        # document | commit-message | issue | discussion
    source_key: str         # path, revision, or issue key
    quote: str
    start: int
    end: int
    revision: str

    @staticmethod
    def make(source_kind: str, source_key: str, quote: str, start: int,
             end: int, revision: str) -> "EvidenceFragment":
        eid = f"e:{source_kind}:{source_key}:{start}-{end}"
        return EvidenceFragment(eid, source_kind, source_key, quote,
                                start, end, revision)

    def to_record(self) -> dict:
        return {"id": self.id, "source_kind": self.source_kind,
                "source_key": self.source_key, "quote": self.quote,
                "start": self.start, "end": self.end,
                "revision": self.revision}

    @staticmethod
    def from_record(rec: Mapping) -> "EvidenceFragment":
        return EvidenceFragment(rec["id"], rec["source_kind"],
                                rec["source_key"], rec["quote"],
                                rec["start"], rec["end"], rec["revision"])

    def verify(self, source_text: str) -> bool:
        return source_text[self.start:self.end] == self.quote


# --------------------------------------------------------------------------
# Extractor hooks

@dataclass(frozen=True)
class ExtractorHook:
    hook_point: str             # concept | functionality | rationale
    implementation_id: str
    deterministic: bool
    fn: Callable


_HOOKS: dict[str, ExtractorHook] = {}


def register_hook(hook: ExtractorHook) -> None:
    _HOOKS[f"{hook.hook_point}:{hook.implementation_id}"] = hook


def get_hook(hook_point: str, implementation_id: str) -> ExtractorHook:
    return _HOOKS[f"{hook_point}:{implementation_id}"]


# --------------------------------------------------------------------------
# Unit results

@dataclass
class UnitResult:
    nodes: list[KnowledgeNode] = field(default_factory=list)
    edges: list[TypedEdge] = field(default_factory=list)
    evidence: list[EvidenceFragment] = field(default_factory=list)
    # functionality id -> ordered member function ids (call-graph layer only)
    members: dict[str, tuple[str, ...]] = field(default_factory=dict)


def merge_units(units: Iterable[UnitResult]) -> UnitResult:
    """Set-union merge; on node-id collision keep the field-wise smallest."""
    merged = UnitResult()
    nodes: dict[str, KnowledgeNode] = {}
    edges: dict[tuple, TypedEdge] = {}
    evidence: dict[str, EvidenceFragment] = {}
    for unit in units:
        for node in unit.nodes:
            prior = nodes.get(node.id)
            if prior is None or _node_sort_key(node) < _node_sort_key(prior):
                nodes[node.id] = node
        for edge in unit.edges:
            prior = edges.get(edge.key)
            if prior is None or edge.attributes < prior.attributes:
                edges[edge.key] = edge
        for frag in unit.evidence:
            evidence.setdefault(frag.id, frag)
        merged.members.update(unit.members)
    merged.nodes = sorted(nodes.values(), key=lambda n: n.id)
    merged.edges = sorted(edges.values(), key=lambda e: e.key)
    merged.evidence = sorted(evidence.values(), key=lambda e: e.id)
    return merged


def _node_sort_key(node: KnowledgeNode) -> tuple:
    return (node.title, node.summary, node.status, node.confidence)


# --------------------------------------------------------------------------
# Top-down: documents -> concepts and constraints

_HEADING = re.compile(r"^(#{1,6})\s+(.*\S)\s*$")


def derive_document_unit(path: str, text: str, revision: str,
                         lexicon: Lexicon = DEFAULT_LEXICON,
                         prior: float = 0.5) -> UnitResult:
    """One concept per heading; one constraint per modal-cue sentence under it.

    A heading of the form ``Title: sentence`` contributes the trailing part
    as the first body sentence of its own section.
    """
    unit = UnitResult()
    line_offsets = []
    offset = 0
    lines = text.split("\n")
    for line in lines:
        line_offsets.append(offset)
        offset += len(line) + 1

    sections: list[tuple[str, int, list[tuple[int, str]]]] = []
    current: tuple[str, int, list[tuple[int, str]]] | None = None
    for lineno, line in enumerate(lines):
        match = _HEADING.match(line)
        if match:
            heading = match.group(2)
            title, sep, rest = heading.partition(":")
            title = title.strip()
            title_at = line_offsets[lineno] + line.index(title)
            current = (title, title_at, [])
            sections.append(current)
            if sep and rest.strip():
                rest_at = line_offsets[lineno] + line.index(heading) + \
                    len(heading) - len(rest)
                current[2].append((rest_at, rest))
        elif current is not None:
            current[2].append((line_offsets[lineno], line))

    for title, title_at, body in sections:
        if not title:
            continue
        concept_id = knowledge_id("concept", slug(title))
        concept_evidence = EvidenceFragment.make(
            "document", path, title, title_at, title_at + len(title), revision)
        unit.nodes.append(KnowledgeNode(concept_id, "concept", title,
                                        summary=title, confidence=prior))
        unit.evidence.append(concept_evidence)
        unit.edges.append(TypedEdge.make(concept_id, "evidenced-by",
                                         concept_evidence.id))
        for seg_offset, seg_text in body:
            for start, end, sentence in sentence_spans(seg_text):
                if not lexicon.has_modal(sentence):
                    continue
                constraint_id = knowledge_id("constraint", slug(sentence))
                frag = EvidenceFragment.make(
                    "document", path, sentence,
                    seg_offset + start, seg_offset + end, revision)
                unit.nodes.append(KnowledgeNode(
                    constraint_id, "constraint", sentence, summary=sentence,
                    confidence=prior))
                unit.evidence.append(frag)
                unit.edges.append(TypedEdge.make(
                    constraint_id, "evidenced-by", frag.id))
                unit.edges.append(TypedEdge.make(
                    concept_id, "constrained-by", constraint_id,
                    {"polarity": "forbids"}))
    return unit


# --------------------------------------------------------------------------
# Bottom-up: public call-graph components -> functionalities

def derive_function_layer(code_map: CodeMap,
                          sources: Mapping[str, str],
                          revisions_by_path: Mapping[str, str],
                          fallback_revision: str,
                          prior: float = 0.5) -> UnitResult:
    """One functionality per connected component of the public call graph."""
    unit = UnitResult()
    functions = {n.id: n for n in code_map.nodes.values()
                 if n.kind == "function" and n.visibility == "public"}
    adjacency: dict[str, set[str]] = {fid: set() for fid in functions}
    for edge in code_map.edges:
        if edge.relation == "calls" and edge.source in functions \
                and edge.target in functions:
            adjacency[edge.source].add(edge.target)
            adjacency[edge.target].add(edge.source)

    seen: set[str] = set()
    components: list[list[str]] = []
    for fid in sorted(functions):
        if fid in seen:
            continue
        component = []
        stack = [fid]
        seen.add(fid)
        while stack:
            node = stack.pop()
            component.append(node)
            for neighbor in sorted(adjacency[node]):
                if neighbor not in seen:
                    seen.add(neighbor)
                    stack.append(neighbor)
        components.append(sorted(component))

    for component in components:
        tokens = sorted({t for fid in component
                         for t in token_set(functions[fid].name)})
        if not tokens:
            continue
        title = "-".join(tokens)
        func_id = knowledge_id("functionality", title)
        resp_id = knowledge_id("responsibility", title)
        evidence: list[EvidenceFragment] = []
        for fid in component:
            node = functions[fid]
            text = sources.get(node.path)
            if text is None:
                continue
            at = text.find(node.name)
            if at < 0:
                continue
            evidence.append(EvidenceFragment.make(
                "document", node.path, node.name, at, at + len(node.name),
                revisions_by_path.get(node.path, fallback_revision)))
        if not evidence:
            continue        # no verbatim grounding, no claim
        owning_files = sorted({f"a:{functions[fid].path}" for fid in component
                               if f"a:{functions[fid].path}" in code_map.nodes})
        unit.nodes.append(KnowledgeNode(func_id, "functionality", title,
                                        summary=f"functions {title}",
                                        confidence=prior))
        unit.nodes.append(KnowledgeNode(
            resp_id, "responsibility", title,
            summary=f"responsibility for {title}", confidence=prior))
        unit.members[func_id] = tuple(component)
        unit.edges.append(TypedEdge.make(func_id, "has-responsibility",
                                         resp_id))
        for file_id in owning_files:
            unit.edges.append(TypedEdge.make(resp_id, "assigned-to", file_id))
        for frag in evidence:
            unit.evidence.append(frag)
            unit.edges.append(TypedEdge.make(func_id, "evidenced-by", frag.id))
            unit.edges.append(TypedEdge.make(resp_id, "evidenced-by", frag.id))
    return unit


def skeleton_bridge_edges(nodes: Iterable[KnowledgeNode]) -> list[TypedEdge]:
    """operationalized-by edges for concept/functionality title-token overlap."""
    concepts = [n for n in nodes if n.kind == "concept"]
    functionalities = [n for n in nodes if n.kind == "functionality"]
    edges = []
    for concept in sorted(concepts, key=lambda n: n.id):
        concept_tokens = token_set(concept.title)
        for functionality in sorted(functionalities, key=lambda n: n.id):
            if concept_tokens & token_set(functionality.title):
                edges.append(TypedEdge.make(concept.id, "operationalized-by",
                                            functionality.id))
    return edges


def extract_skeleton(code_map: CodeMap,
                     documents: Mapping[str, str],
                     sources: Mapping[str, str] | None = None,
                     revisions_by_path: Mapping[str, str] | None = None,
                     revision: str = "",
                     lexicon: Lexicon = DEFAULT_LEXICON,
                     prior: float = 0.5) -> UnitResult:
    """Stage 2 in one call: documents top-down, call graph bottom-up."""
    revs = revisions_by_path or {}
    units = [derive_document_unit(path, documents[path],
                                  revs.get(path, revision), lexicon, prior)
             for path in sorted(documents)]
    units.append(derive_function_layer(code_map, sources or {}, revs,
                                       revision, prior))
    merged = merge_units(units)
    merged.edges = sorted(
        set(merged.edges) | set(skeleton_bridge_edges(merged.nodes)),
        key=lambda e: e.key)
    return merged


# --------------------------------------------------------------------------
# Stage 3: rationale mining

def _changed_node_ids(code_map: CodeMap, paths: Iterable[str],
                      relation: str) -> list[str]:
    # only kinds the relation signature admits as sources
    allowed = RELATION_SIGNATURES[relation][0]
    wanted = set(paths)
    return sorted(n.id for n in code_map.nodes.values()
                  if n.path in wanted and n.kind in allowed)


def derive_record_unit(record: ChangeRecord, code_map: CodeMap,
                       lexicon: Lexicon = DEFAULT_LEXICON,
                       prior: float = 0.5) -> UnitResult:
    unit = UnitResult()
    justify = _changed_node_ids(code_map, record.changed_paths, "justified-by")
    constrain = _changed_node_ids(code_map, record.changed_paths,
                                  "constrained-by")
    for start, end, sentence in sentence_spans(record.message):
        if not lexicon.has_causal(sentence):
            continue
        rationale_id = knowledge_id("rationale", slug(sentence))
        frag = EvidenceFragment.make("commit-message", record.revision,
                                     sentence, start, end, record.revision)
        unit.nodes.append(KnowledgeNode(rationale_id, "rationale", sentence,
                                        summary=sentence, confidence=prior))
        unit.evidence.append(frag)
        unit.edges.append(TypedEdge.make(rationale_id, "evidenced-by",
                                         frag.id))
        for target in justify:
            unit.edges.append(TypedEdge.make(target, "justified-by",
                                             rationale_id))
        if lexicon.has_modal(sentence):
            constraint_id = knowledge_id("constraint", slug(sentence))
            unit.nodes.append(KnowledgeNode(
                constraint_id, "constraint", sentence, summary=sentence,
                confidence=prior))
            unit.edges.append(TypedEdge.make(constraint_id, "evidenced-by",
                                             frag.id))
            for target in constrain:
                unit.edges.append(TypedEdge.make(
                    target, "constrained-by", constraint_id,
                    {"polarity": "forbids"}))
    return unit


def derive_issue_unit(issue: IssueRecord, records: Sequence[ChangeRecord],
                      code_map: CodeMap, fallback_revision: str,
                      lexicon: Lexicon = DEFAULT_LEXICON,
                      prior: float = 0.5) -> UnitResult:
    unit = UnitResult()
    referencing = [r for r in records if issue.key in r.issue_refs]
    paths = sorted({p for r in referencing for p in r.changed_paths})
    justify = _changed_node_ids(code_map, paths, "justified-by")
    constrain = _changed_node_ids(code_map, paths, "constrained-by")
    revision = referencing[-1].revision if referencing else fallback_revision
    for start, end, sentence in sentence_spans(issue.body):
        if not lexicon.has_causal(sentence):
            continue
        rationale_id = knowledge_id("rationale", slug(sentence))
        frag = EvidenceFragment.make("issue", issue.key, sentence,
                                     start, end, revision)
        unit.nodes.append(KnowledgeNode(rationale_id, "rationale", sentence,
                                        summary=sentence, confidence=prior))
        unit.evidence.append(frag)
        unit.edges.append(TypedEdge.make(rationale_id, "evidenced-by",
                                         frag.id))
        for target in justify:
            unit.edges.append(TypedEdge.make(target, "justified-by",
                                             rationale_id))
        if lexicon.has_modal(sentence):
            constraint_id = knowledge_id("constraint", slug(sentence))
            unit.nodes.append(KnowledgeNode(
                constraint_id, "constraint", sentence, summary=sentence,
                confidence=prior))
            unit.edges.append(TypedEdge.make(constraint_id, "evidenced-by",
                                             frag.id))
            for target in constrain:
                unit.edges.append(TypedEdge.make(
                    target, "constrained-by", constraint_id,
                    {"polarity": "forbids"}))
    return unit


def mine_rationales(records: Sequence[ChangeRecord],
                    issues: Sequence[IssueRecord],
                    code_map: CodeMap,
                    fallback_revision: str = "",
                    lexicon: Lexicon = DEFAULT_LEXICON,
                    prior: float = 0.5) -> UnitResult:
    units = [derive_record_unit(r, code_map, lexicon, prior) for r in records]
    units += [derive_issue_unit(i, records, code_map, fallback_revision,
                                lexicon, prior)
              for i in sorted(issues, key=lambda i: i.key)]
    return merge_units(units)


# --------------------------------------------------------------------------
# Stage 4: reflection links

def build_reflection_links(skeleton: UnitResult, code_map: CodeMap,
                           evidence_by_node: Mapping[str, Sequence[EvidenceFragment]]
                           ) -> list[TypedEdge]:
    """implements / owns / g-depends-on grounding plus revision anchoring."""
    edges: set[TypedEdge] = set()
    configured: dict[str, set[str]] = {}
    for edge in code_map.edges:
        if edge.relation == "configured-by":
            configured.setdefault(edge.source, set()).add(edge.target)
    for func_id, members in skeleton.members.items():
        for member in members:
            if member in code_map.nodes:
                edges.add(TypedEdge.make(member, "implements", func_id))
            for config_id in configured.get(member, ()):
                edges.add(TypedEdge.make(func_id, "g-depends-on", config_id))
    for edge in skeleton.edges:
        if edge.relation == "assigned-to" and edge.target in code_map.nodes:
            edges.add(TypedEdge.make(edge.target, "owns", edge.source))
    for node_id, fragments in evidence_by_node.items():
        for frag in fragments:
            if frag.revision:
                edges.add(TypedEdge.make(node_id, "anchored-to",
                                         revision_ref(frag.revision)))
    return sorted(edges, key=lambda e: e.key)


# --------------------------------------------------------------------------
# Knowledge cards

@dataclass(frozen=True)
class KnowledgeCard:
    subject: str
    title: str
    bullets: tuple[str, ...]
    evidence_ids: tuple[str, ...]
    grounded_ids: tuple[str, ...]
    last_built_at: str

    def render(self) -> str:
        lines = [f"CARD {self.subject}"]
        lines += list(self.bullets)
        lines.append("GROUNDING")
        lines += [f"- {gid}" for gid in self.grounded_ids]
        lines.append("LINKS")
        lines += [f"- {b}" for b in self.link_bullets()]
        lines.append("EVIDENCE")
        lines += [f"- {eid}" for eid in self.evidence_ids]
        return "\n".join(lines) + "\n"

    def link_bullets(self) -> tuple[str, ...]:
        return tuple(b[len("link: "):] for b in self.bullets
                     if b.startswith("link: "))

    def to_record(self) -> dict:
        return {"subject": self.subject, "title": self.title,
                "bullets": list(self.bullets),
                "evidence_ids": list(self.evidence_ids),
                "grounded_ids": list(self.grounded_ids),
                "last_built_at": self.last_built_at}

    @staticmethod
    def from_record(rec: Mapping) -> "KnowledgeCard":
        return KnowledgeCard(rec["subject"], rec["title"],
                             tuple(rec["bullets"]),
                             tuple(rec["evidence_ids"]),
                             tuple(rec["grounded_ids"]),
                             rec["last_built_at"])


class UnknownSubjectError(KeyError):
    pass


def generate_card(subject: str,
                  nodes: Mapping[str, Node],
                  edges: Iterable[TypedEdge],
                  evidence: Mapping[str, EvidenceFragment],
                  revision: str) -> KnowledgeCard:
    """Deterministic card for one knowledge node."""
    node = nodes.get(subject)
    if node is None or not isinstance(node, KnowledgeNode):
        raise UnknownSubjectError(subject)
    grounded: set[str] = set()
    evidence_ids: set[str] = set()
    spine_titles: set[str] = set()
    edge_list = list(edges)
    for edge in edge_list:
        if edge.source == subject:
            if edge.relation == "evidenced-by":
                evidence_ids.add(edge.target)
            elif edge.relation in ("g-depends-on", "assigned-to"):
                grounded.add(edge.target)
            elif edge.relation in ("constrained-by", "justified-by"):
                other = nodes.get(edge.target)
                if other is not None:
                    spine_titles.add(f"{edge.relation}: {other.title}")
        elif edge.target == subject:
            if edge.relation in ("implements", "owns"):
                grounded.add(edge.source)
            elif edge.relation in ("constrained-by", "justified-by"):
                other = nodes.get(edge.source)
                if isinstance(other, KnowledgeNode) and \
                        other.kind in ("constraint", "rationale"):
                    spine_titles.add(f"{edge.relation}: {other.title}")
                elif other is not None and edge.source.startswith("a:"):
                    grounded.add(edge.source)
    if node.kind == "concept":
        # ground a concept through the functionalities it operationalizes
        func_ids = {e.target for e in edge_list
                    if e.source == subject and
                    e.relation == "operationalized-by"}
        for edge in edge_list:
            if edge.relation == "implements" and edge.target in func_ids:
                grounded.add(edge.source)
    bullets = [f"{node.kind}: {node.title}",
               f"status: {node.status} confidence: {node.confidence:g}"]
    bullets += [f"link: {t}" for t in sorted(spine_titles)]
    return KnowledgeCard(
        subject=subject, title=node.title, bullets=tuple(bullets),
        evidence_ids=tuple(sorted(e for e in evidence_ids if e in evidence)),
        grounded_ids=tuple(sorted(grounded)),
        last_built_at=revision)


register_hook(ExtractorHook("concept", "reference", True,
                            derive_document_unit))
register_hook(ExtractorHook("functionality", "reference", True,
                            derive_function_layer))
register_hook(ExtractorHook("rationale", "reference", True,
                            derive_record_unit))
