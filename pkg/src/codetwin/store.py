"""Versioned twin store: one snapshot per revision, byte-stable on disk.

Incrementality works at the level of derivation units (one per document, one
for the call-graph layer, one per change record, one per referenced issue).
Each unit carries a fingerprint over everything it reads; an update re-derives
exactly the units whose fingerprints moved and reuses the rest, then always
recomputes the cheap cross-unit link layer. Because the fingerprint covers
all inputs, an incremental update lands on the same bytes as a rebuild from
scratch, and a paranoid mode verifies that claim on every update.

Curation writes never mutate extracted state in place; they live in an
overlay of small operations replayed identically by both build paths.
"""

from __future__ import annotations

import hashlib
import json
import posixpath
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .artifact_map import CodeMap, ingest_facts, resolve_references
from .extraction import (
    DEFAULT_LEXICON,
    EvidenceFragment,
    KnowledgeCard,
    Lexicon,
    UnitResult,
    build_reflection_links,
    derive_document_unit,
    derive_function_layer,
    derive_issue_unit,
    derive_record_unit,
    generate_card,
    merge_units,
    skeleton_bridge_edges,
)
from .extractors import DOCUMENT_SUFFIXES, extract_facts
from .history import (
    ChangeRecord,
    IssueRecord,
    LinkResult,
    TraceAnchor,
    link_history,
    parse_history,
    parse_issues,
    serialize_history,
    serialize_issues,
)
from .model import (
    KnowledgeNode,
    Node,
    TypedEdge,
    ValidationReport,
    canonical_form,
    node_from_record,
    validate_link_integrity,
    validate_schema,
)

STORE_VERSION = "twin/1"
SNAPSHOT_HEADER = "twin-snapshot/1"


class DivergenceError(RuntimeError):
    """Incremental result disagrees with a from-scratch rebuild."""


class UnknownRevisionError(KeyError):
    pass


class StoreFormatError(ValueError):
    pass


# --------------------------------------------------------------------------
# Overlay operations (curation writes)

def apply_overlay(nodes: dict[str, Node], edges: set[TypedEdge],
                  ops: Sequence[Mapping]) -> None:
    """Replay curation operations over a freshly extracted graph, in order.

    Operations referring to ids absent from this snapshot are skipped, so the
    same overlay replays cleanly against every revision.
    """
    for op in ops:
        kind = op["op"]
        if kind in ("set-confidence", "set-status", "set-summary",
                    "set-title"):
            node = nodes.get(op["subject"])
            if not isinstance(node, KnowledgeNode):
                continue
            fields = {"set-confidence": "confidence", "set-status": "status",
                      "set-summary": "summary", "set-title": "title"}
            nodes[node.id] = _replace_field(node, fields[kind], op["value"])
        elif kind == "add-node":
            node = node_from_record(op["node"])
            nodes[node.id] = node
        elif kind == "remove-node":
            removed = nodes.pop(op["subject"], None)
            if removed is not None:
                edges.difference_update(
                    {e for e in edges
                     if op["subject"] in (e.source, e.target)})
        elif kind == "add-edge":
            edge = TypedEdge.from_record(op["edge"])
            if edge.source in nodes and (
                    edge.target in nodes or edge.target[:2] in ("h:", "e:")):
                edges.add(edge)
        elif kind == "remove-edge":
            edge = TypedEdge.from_record(op["edge"])
            edges.discard(edge)
        else:
            raise StoreFormatError(f"unknown overlay op {kind!r}")


def _replace_field(node: KnowledgeNode, name: str, value) -> KnowledgeNode:
    rec = {"id": node.id, "kind": node.kind, "title": node.title,
           "summary": node.summary, "status": node.status,
           "confidence": node.confidence}
    rec[name] = value
    return KnowledgeNode(rec["id"], rec["kind"], rec["title"], rec["summary"],
                         rec["status"], rec["confidence"])


# --------------------------------------------------------------------------
# Snapshots

@dataclass
class TwinSnapshot:
    revision: str
    nodes: dict[str, Node]
    edges: set[TypedEdge]
    evidence: dict[str, EvidenceFragment]
    anchors: list[TraceAnchor]
    cards: dict[str, KnowledgeCard]
    sources: dict[str, str]
    code_map: CodeMap | None = None

    def knowledge_nodes(self) -> list[KnowledgeNode]:
        return sorted((n for n in self.nodes.values()
                       if isinstance(n, KnowledgeNode)), key=lambda n: n.id)

    def validate(self, known_revisions: Sequence[str],
                 known_issues: Sequence[str]) -> ValidationReport:
        report = validate_schema(self.nodes.values(), self.edges)
        report.extend(validate_link_integrity(
            self.nodes.values(), self.edges, known_revisions, known_issues,
            self.evidence))
        for frag in self.evidence.values():
            text = self.evidence_source_text(frag)
            if text is None or not frag.verify(text):
                report.add(frag.id, "evidence-mismatch",
                           "quote does not match source at stated offsets")
        return report

    def evidence_source_text(self, frag: EvidenceFragment) -> str | None:
        if frag.source_kind == "document":
            return self.sources.get(frag.source_key)
        return self.sources.get(f"@{frag.source_kind}:{frag.source_key}")


def snapshot_bytes(snap: TwinSnapshot) -> bytes:
    """The extended canonical form: graph plus anchors, evidence and cards."""
    lines = [SNAPSHOT_HEADER, f"revision {snap.revision}", "GRAPH"]
    graph = canonical_form(snap.nodes.values(), snap.edges)
    lines.append(graph.decode("utf-8").rstrip("\n"))
    lines.append("ANCHORS")
    lines += [_json_line(a.to_record())
              for a in sorted(snap.anchors,
                              key=lambda a: (a.subject, a.anchor_kind,
                                             a.target, a.revision))]
    lines.append("EVIDENCE")
    lines += [_json_line(e.to_record())
              for e in sorted(snap.evidence.values(), key=lambda e: e.id)]
    lines.append("CARDS")
    lines += [_json_line(snap.cards[s].to_record())
              for s in sorted(snap.cards)]
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_snapshot(data: bytes, sources: Mapping[str, str]) -> TwinSnapshot:
    lines = data.decode("utf-8").splitlines()
    if not lines or lines[0] != SNAPSHOT_HEADER:
        raise StoreFormatError(f"expected header {SNAPSHOT_HEADER!r}")
    if len(lines) < 2 or not lines[1].startswith("revision "):
        raise StoreFormatError("missing revision line")
    revision = lines[1][len("revision "):]
    section = None
    nodes: dict[str, Node] = {}
    edges: set[TypedEdge] = set()
    anchors: list[TraceAnchor] = []
    evidence: dict[str, EvidenceFragment] = {}
    cards: dict[str, KnowledgeCard] = {}
    for line in lines[2:]:
        if line in ("GRAPH", "ANCHORS", "EVIDENCE", "CARDS"):
            section = line
            continue
        if section == "GRAPH":
            if line == "twin-graph/1":
                continue
            rec = json.loads(line)
            if "relation" in rec:
                edges.add(TypedEdge.from_record(rec))
            else:
                node = node_from_record(rec)
                nodes[node.id] = node
        elif section == "ANCHORS":
            anchors.append(TraceAnchor.from_record(json.loads(line)))
        elif section == "EVIDENCE":
            frag = EvidenceFragment.from_record(json.loads(line))
            evidence[frag.id] = frag
        elif section == "CARDS":
            card = KnowledgeCard.from_record(json.loads(line))
            cards[card.subject] = card
        else:
            raise StoreFormatError(f"content before first section: {line!r}")
    return TwinSnapshot(revision, nodes, edges, evidence, anchors, cards,
                        dict(sources))


def _json_line(record: Mapping) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"))


# --------------------------------------------------------------------------
# Derivation units with fingerprints

UnitCache = dict[str, tuple[str, UnitResult]]


def _fingerprint(payload) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, ensure_ascii=False)
        .encode("utf-8")).hexdigest()


def _cached(cache: UnitCache, unit_id: str, fingerprint: str,
            build: Callable[[], UnitResult]) -> UnitResult:
    hit = cache.get(unit_id)
    if hit is not None and hit[0] == fingerprint:
        return hit[1]
    unit = build()
    cache[unit_id] = (fingerprint, unit)
    return unit


def _lexicon_key(lexicon: Lexicon) -> list:
    return [list(lexicon.causal), list(lexicon.modal)]


def _path_nodes_key(cmap: CodeMap, paths) -> list:
    wanted = set(paths)
    return sorted([n.id, n.kind] for n in cmap.nodes.values()
                  if n.path in wanted)


@dataclass
class BuildSettings:
    extractor: str = "tree"
    lexicon: Lexicon = field(default_factory=lambda: DEFAULT_LEXICON)
    prior: float = 0.5
    paranoid: bool = False


def build_snapshot(records: Sequence[ChangeRecord],
                   issues: Sequence[IssueRecord],
                   tree: Mapping[str, str],
                   anchors: Sequence[TraceAnchor],
                   overlay: Sequence[Mapping],
                   settings: BuildSettings,
                   cache: UnitCache | None = None,
                   code_map: CodeMap | None = None) -> TwinSnapshot:
    """Derive the full snapshot for the revision at the end of ``records``."""
    cache = cache if cache is not None else {}
    revision = records[-1].revision if records else ""
    lexicon, prior = settings.lexicon, settings.prior
    if code_map is None:
        code_map = resolve_references(
            ingest_facts(extract_facts(tree, settings.extractor), tree))
    last_rev: dict[str, str] = {}
    for rec in records:
        for path in rec.changed_paths:
            last_rev[path] = rec.revision

    units: list[UnitResult] = []
    for path in sorted(tree):
        if posixpath.splitext(path)[1] not in DOCUMENT_SUFFIXES:
            continue
        doc_rev = last_rev.get(path, revision)
        fp = _fingerprint(["doc", path, tree[path], doc_rev,
                           _lexicon_key(lexicon), prior])
        units.append(_cached(
            cache, f"doc:{path}", fp,
            lambda p=path, r=doc_rev: derive_document_unit(
                p, tree[p], r, lexicon, prior)))

    functions = sorted(n.id for n in code_map.nodes.values()
                       if n.kind == "function" and n.visibility == "public")
    func_paths = sorted({code_map.nodes[fid].path for fid in functions})
    call_keys = sorted(list(e.key) for e in code_map.edges
                       if e.relation == "calls")
    fp = _fingerprint(["func-layer", functions, call_keys,
                       [[p, tree.get(p, ""), last_rev.get(p, revision)]
                        for p in func_paths],
                       _lexicon_key(lexicon), prior])
    units.append(_cached(
        cache, "func-layer", fp,
        lambda: derive_function_layer(
            code_map, tree, last_rev, revision, prior)))

    referenced: dict[str, list[ChangeRecord]] = {}
    for rec in records:
        fp = _fingerprint(["rec", rec.to_record(),
                           _path_nodes_key(code_map, rec.changed_paths),
                           _lexicon_key(lexicon), prior])
        units.append(_cached(
            cache, f"rec:{rec.revision}", fp,
            lambda r=rec: derive_record_unit(r, code_map, lexicon, prior)))
        for key in rec.issue_refs:
            referenced.setdefault(key, []).append(rec)

    issues_by_key = {i.key: i for i in issues}
    for key in sorted(referenced):
        issue = issues_by_key.get(key)
        if issue is None:
            continue
        paths = sorted({p for r in referenced[key] for p in r.changed_paths})
        fp = _fingerprint(["iss", issue.to_record(),
                           [r.to_record() for r in referenced[key]],
                           _path_nodes_key(code_map, paths),
                           _lexicon_key(lexicon), prior])
        units.append(_cached(
            cache, f"iss:{key}", fp,
            lambda i=issue: derive_issue_unit(
                i, records, code_map, revision, lexicon, prior)))

    knowledge = merge_units(units)

    # cross-unit link layer, always recomputed
    bridge = skeleton_bridge_edges(knowledge.nodes)
    evidence_index = {f.id: f for f in knowledge.evidence}
    evidence_by_node: dict[str, list[EvidenceFragment]] = {}
    for edge in knowledge.edges:
        if edge.relation == "evidenced-by":
            evidence_by_node.setdefault(edge.source, []).append(
                evidence_index[edge.target])
    links = build_reflection_links(knowledge, code_map, evidence_by_node)

    nodes: dict[str, Node] = dict(code_map.nodes)
    nodes.update({n.id: n for n in knowledge.nodes})
    edges = set(code_map.edges) | set(knowledge.edges) | set(bridge) \
        | set(links)

    apply_overlay(nodes, edges, overlay)

    present_evidence = {e.target for e in edges
                        if e.relation == "evidenced-by"}
    evidence = {eid: frag for eid, frag in evidence_index.items()
                if eid in present_evidence}

    sources = dict(tree)
    for rec in records:
        sources[f"@commit-message:{rec.revision}"] = rec.message
    for issue in issues:
        sources[f"@issue:{issue.key}"] = issue.body

    cards = {}
    for node in nodes.values():
        if isinstance(node, KnowledgeNode):
            cards[node.id] = generate_card(node.id, nodes, edges, evidence,
                                           revision)

    snap_anchors = [a for a in anchors
                    if any(a.revision == r.revision for r in records)]
    return TwinSnapshot(revision, nodes, edges, evidence, snap_anchors,
                        cards, sources, code_map)


# --------------------------------------------------------------------------
# Timeline builds

@dataclass
class RepoTimeline:
    """Ordered change records with the full source tree at each revision."""
    records: list[ChangeRecord]
    issues: list[IssueRecord]
    trees: dict[str, dict[str, str]]        # revision -> path -> text

    def tree_at(self, revision: str) -> dict[str, str]:
        if revision not in self.trees:
            raise UnknownRevisionError(revision)
        return self.trees[revision]


def _code_maps(timeline: RepoTimeline,
               settings: BuildSettings) -> dict[str, CodeMap]:
    maps = {}
    for rec in timeline.records:
        tree = timeline.tree_at(rec.revision)
        maps[rec.revision] = resolve_references(
            ingest_facts(extract_facts(tree, settings.extractor), tree))
    return maps


def full_rebuild(timeline: RepoTimeline,
                 overlay: Sequence[Mapping] = (),
                 settings: BuildSettings | None = None,
                 cache: UnitCache | None = None
                 ) -> tuple[dict[str, TwinSnapshot], LinkResult]:
    """Build every snapshot from scratch, in history order."""
    settings = settings or BuildSettings()
    maps = _code_maps(timeline, settings)
    linked = link_history(timeline.records, maps)
    snapshots: dict[str, TwinSnapshot] = {}
    # unit fingerprints cover all inputs, so one cache is safe across revisions
    shared: UnitCache = dict(cache) if cache else {}
    for i, rec in enumerate(timeline.records):
        prefix = timeline.records[: i + 1]
        snapshots[rec.revision] = build_snapshot(
            prefix, timeline.issues, timeline.tree_at(rec.revision),
            linked.anchors, overlay, settings, cache=shared,
            code_map=maps[rec.revision])
    return snapshots, linked


# --------------------------------------------------------------------------
# Persistent store

class TwinStore:
    """Directory-backed twin with incremental update and paranoid checking."""

    def __init__(self, root: str | Path, timeline: RepoTimeline,
                 overlay: list[dict], settings: BuildSettings):
        self.root = Path(root)
        self.timeline = timeline
        self.overlay = overlay
        self.settings = settings
        self._cache: UnitCache = {}
        self._snapshots: dict[str, TwinSnapshot] = {}
        self._anchors: list[TraceAnchor] = []
        self._warnings: list[str] = []

    # -- lifecycle ---------------------------------------------------------

    @classmethod
    def build(cls, root: str | Path, timeline: RepoTimeline,
              overlay: Sequence[Mapping] = (),
              settings: BuildSettings | None = None) -> "TwinStore":
        store = cls(root, timeline, list(overlay),
                    settings or BuildSettings())
        snapshots, linked = full_rebuild(timeline, store.overlay,
                                         store.settings)
        store._snapshots = snapshots
        store._anchors = linked.anchors
        store._warnings = linked.warnings
        store._persist()
        return store

    @classmethod
    def open(cls, root: str | Path) -> "TwinStore":
        rootp = Path(root)
        index = json.loads((rootp / "index.json").read_text("utf-8"))
        if index.get("version") != STORE_VERSION:
            raise StoreFormatError(
                f"expected store version {STORE_VERSION!r}")
        records = parse_history((rootp / "history.hist").read_text("utf-8"))
        issues = parse_issues((rootp / "issues.iss").read_text("utf-8"))
        overlay = json.loads((rootp / "overlay.json").read_text("utf-8"))
        settings = BuildSettings(
            extractor=index.get("extractor", "tree"),
            prior=index.get("prior", 0.5))
        trees = {}
        snapshots = {}
        anchors: list[TraceAnchor] = []
        for revision in index["revisions"]:
            snap_dir = rootp / "snapshots" / _safe_name(revision)
            tree = json.loads((snap_dir / "sources.json").read_text("utf-8"))
            trees[revision] = tree
            snap = parse_snapshot((snap_dir / "snapshot.txt").read_bytes(),
                                  tree)
            for rec in records:
                snap.sources[f"@commit-message:{rec.revision}"] = rec.message
            for issue in issues:
                snap.sources[f"@issue:{issue.key}"] = issue.body
            snapshots[revision] = snap
            if snap.anchors:
                known = {(a.subject, a.anchor_kind, a.target, a.revision)
                         for a in anchors}
                anchors += [a for a in snap.anchors
                            if (a.subject, a.anchor_kind, a.target,
                                a.revision) not in known]
        store = cls(rootp, RepoTimeline(records, issues, trees), overlay,
                    settings)
        store._snapshots = snapshots
        store._anchors = anchors
        return store

    # -- reads -------------------------------------------------------------

    @property
    def revisions(self) -> list[str]:
        return [r.revision for r in self.timeline.records]

    @property
    def head(self) -> str:
        if not self.timeline.records:
            raise UnknownRevisionError("store has no revisions")
        return self.timeline.records[-1].revision

    def snapshot(self, revision: str | None = None) -> TwinSnapshot:
        revision = revision if revision is not None else self.head
        snap = self._snapshots.get(revision)
        if snap is None:
            raise UnknownRevisionError(revision)
        return snap

    def validate(self, revision: str | None = None) -> ValidationReport:
        snap = self.snapshot(revision)
        return snap.validate(self.revisions,
                             [i.key for i in self.timeline.issues])

    def warnings(self) -> list[str]:
        return list(self._warnings)

    # -- writes ------------------------------------------------------------

    def update(self, record: ChangeRecord,
               changes: Mapping[str, str | None],
               new_issues: Sequence[IssueRecord] = ()) -> TwinSnapshot:
        """Apply one change record incrementally.

        ``changes`` maps each changed path to its new text, or None for a
        deletion; its keys must match the record's changed paths.
        """
        if set(changes) != set(record.changed_paths):
            raise StoreFormatError(
                "changed paths do not match supplied contents")
        if self.timeline.records and \
                record.parent != self.timeline.records[-1].revision:
            raise StoreFormatError(
                f"record parent {record.parent!r} is not the current head")
        base = dict(self.timeline.trees[self.timeline.records[-1].revision]) \
            if self.timeline.records else {}
        for path, text in changes.items():
            if text is None:
                base.pop(path, None)
            else:
                base[path] = text
        self.timeline.records.append(record)
        self.timeline.trees[record.revision] = base
        for issue in new_issues:
            if all(i.key != issue.key for i in self.timeline.issues):
                self.timeline.issues.append(issue)

        parent_map = self._snapshots[record.parent].code_map \
            if record.parent and record.parent in self._snapshots else None
        code_map = resolve_references(
            ingest_facts(extract_facts(base, self.settings.extractor), base))
        if parent_map is None:
            parent_map = CodeMap()
        linked = link_history([record],
                              {record.revision: code_map,
                               record.parent: parent_map}
                              if record.parent else
                              {record.revision: code_map})
        self._anchors += linked.anchors
        self._warnings += linked.warnings

        snap = build_snapshot(self.timeline.records, self.timeline.issues,
                              base, self._anchors, self.overlay,
                              self.settings, cache=self._cache,
                              code_map=code_map)
        self._snapshots[record.revision] = snap

        if self.settings.paranoid:
            rebuilt, _ = full_rebuild(self.timeline, self.overlay,
                                      self.settings)
            for revision in self.revisions:
                got = snapshot_bytes(self._snapshots[revision])
                want = snapshot_bytes(rebuilt[revision])
                if got != want:
                    raise DivergenceError(
                        f"incremental snapshot for {revision} diverges "
                        "from full rebuild")
        self._persist()
        return snap

    def apply_ops(self, ops: Sequence[Mapping]) -> None:
        """Append curation operations and re-derive all snapshots with them."""
        self.overlay.extend(dict(op) for op in ops)
        snapshots, linked = full_rebuild(self.timeline, self.overlay,
                                         self.settings, cache=self._cache)
        self._snapshots = snapshots
        self._anchors = linked.anchors
        self._warnings = linked.warnings
        self._persist()

    # -- persistence -------------------------------------------------------

    def _persist(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "index.json").write_text(_json_line({
            "version": STORE_VERSION,
            "revisions": self.revisions,
            "head": self.revisions[-1] if self.revisions else "",
            "extractor": self.settings.extractor,
            "prior": self.settings.prior,
        }) + "\n", "utf-8")
        (self.root / "history.hist").write_text(
            serialize_history(self.timeline.records), "utf-8")
        (self.root / "issues.iss").write_text(
            serialize_issues(self.timeline.issues), "utf-8")
        (self.root / "overlay.json").write_text(
            json.dumps(self.overlay, sort_keys=True, indent=1) + "\n",
            "utf-8")
        for revision, snap in self._snapshots.items():
            snap_dir = self.root / "snapshots" / _safe_name(revision)
            snap_dir.mkdir(parents=True, exist_ok=True)
            (snap_dir / "snapshot.txt").write_bytes(snapshot_bytes(snap))
            (snap_dir / "sources.json").write_text(
                json.dumps(self.timeline.trees[revision], sort_keys=True,
                           ensure_ascii=False) + "\n", "utf-8")


def _safe_name(revision: str) -> str:
    return "".join(c if c.isalnum() or c in "-._" else "_" for c in revision)
