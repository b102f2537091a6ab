"""Human curation: proposals, feedback, confidence and conflict detection.

A proposal is a bundle of overlay operations against the knowledge layer.
Review is all or nothing: accepting applies exactly the delta the dry run
showed, rejecting leaves every snapshot byte untouched. Feedback lands in an
append-only event log, and confidence is recomputed from that log with a
Laplace rule so one loud event cannot pin a node to 0 or 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .model import KnowledgeNode, TypedEdge
from .store import TwinSnapshot, TwinStore, apply_overlay
from .textutil import token_set

PROP_VERSION = "prop/1"
EVT_VERSION = "evt/1"

POSITIVE_EVENTS = frozenset({"patch-accepted", "suggestion-chosen"})
NEGATIVE_EVENTS = frozenset({"patch-rejected", "context-corrected",
                             "boundary-overridden"})
NEUTRAL_EVENTS = frozenset({"summary-edited"})
EVENT_KINDS = POSITIVE_EVENTS | NEGATIVE_EVENTS | NEUTRAL_EVENTS

PROPOSAL_STATUSES = ("pending", "accepted", "rejected")


class UnknownProposalError(KeyError):
    pass


class ProposalStateError(ValueError):
    pass


class BadEventError(ValueError):
    pass


def laplace_confidence(accepts: int, rejects: int) -> float:
    """(1 + accepts) / (2 + accepts + rejects); 0.5 with no signal."""
    if accepts < 0 or rejects < 0:
        raise ValueError("negative feedback counts")
    return (1 + accepts) / (2 + accepts + rejects)


# --------------------------------------------------------------------------
# Proposals

@dataclass(frozen=True)
class UpdateProposal:
    id: str
    subject: str
    author: str
    note: str
    ops: tuple[dict, ...]
    status: str = "pending"

    def to_record(self) -> dict:
        return {"version": PROP_VERSION, "id": self.id,
                "subject": self.subject, "author": self.author,
                "note": self.note, "ops": [dict(o) for o in self.ops],
                "status": self.status}

    @staticmethod
    def from_record(rec: Mapping) -> "UpdateProposal":
        if rec.get("version", PROP_VERSION) != PROP_VERSION:
            raise ProposalStateError(
                f"expected proposal version {PROP_VERSION!r}")
        return UpdateProposal(rec["id"], rec["subject"], rec["author"],
                              rec.get("note", ""),
                              tuple(dict(o) for o in rec["ops"]),
                              rec.get("status", "pending"))


@dataclass(frozen=True)
class ProposalDelta:
    """What accepting a proposal would change, computed without applying it."""
    nodes_changed: tuple[dict, ...]
    nodes_added: tuple[str, ...]
    nodes_removed: tuple[str, ...]
    edges_added: tuple[dict, ...]
    edges_removed: tuple[dict, ...]

    @property
    def empty(self) -> bool:
        return not (self.nodes_changed or self.nodes_added
                    or self.nodes_removed or self.edges_added
                    or self.edges_removed)

    def to_record(self) -> dict:
        return {"nodes_changed": list(self.nodes_changed),
                "nodes_added": list(self.nodes_added),
                "nodes_removed": list(self.nodes_removed),
                "edges_added": list(self.edges_added),
                "edges_removed": list(self.edges_removed)}


def dry_run(snapshot: TwinSnapshot,
            ops: Sequence[Mapping]) -> ProposalDelta:
    """Replay ops on copies of the graph and report the exact difference."""
    nodes = dict(snapshot.nodes)
    edges = set(snapshot.edges)
    apply_overlay(nodes, edges, ops)
    changed = []
    for nid in sorted(set(snapshot.nodes) & set(nodes)):
        before, after = snapshot.nodes[nid], nodes[nid]
        if before != after:
            changed.append({"id": nid, "before": before.to_record(),
                            "after": after.to_record()})
    added = tuple(sorted(set(nodes) - set(snapshot.nodes)))
    removed = tuple(sorted(set(snapshot.nodes) - set(nodes)))
    edges_added = tuple(e.to_record()
                        for e in sorted(edges - snapshot.edges,
                                        key=lambda e: e.key))
    edges_removed = tuple(e.to_record()
                          for e in sorted(snapshot.edges - edges,
                                          key=lambda e: e.key))
    return ProposalDelta(tuple(changed), added, removed,
                         edges_added, edges_removed)


# --------------------------------------------------------------------------
# Feedback events

@dataclass(frozen=True)
class FeedbackEvent:
    seq: int
    kind: str
    subject: str
    note: str = ""
    proposal: str = ""

    def to_record(self) -> dict:
        return {"seq": self.seq, "kind": self.kind, "subject": self.subject,
                "note": self.note, "proposal": self.proposal}

    @staticmethod
    def from_record(rec: Mapping) -> "FeedbackEvent":
        return FeedbackEvent(rec["seq"], rec["kind"], rec["subject"],
                             rec.get("note", ""), rec.get("proposal", ""))


def serialize_events(events: Sequence[FeedbackEvent]) -> str:
    lines = [EVT_VERSION]
    lines += [json.dumps(e.to_record(), sort_keys=True, ensure_ascii=False)
              for e in events]
    return "\n".join(lines) + "\n"


def parse_events(text: str) -> list[FeedbackEvent]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != EVT_VERSION:
        raise BadEventError(f"expected version tag {EVT_VERSION!r}")
    return [FeedbackEvent.from_record(json.loads(line))
            for line in lines[1:] if line.strip()]


def feedback_counts(events: Sequence[FeedbackEvent]
                    ) -> dict[str, tuple[int, int]]:
    """Per subject: (positive, negative); neutral events carry no weight."""
    counts: dict[str, list[int]] = {}
    for event in events:
        bucket = counts.setdefault(event.subject, [0, 0])
        if event.kind in POSITIVE_EVENTS:
            bucket[0] += 1
        elif event.kind in NEGATIVE_EVENTS:
            bucket[1] += 1
    return {s: (a, r) for s, (a, r) in counts.items()}


# --------------------------------------------------------------------------
# Conflicts

@dataclass(frozen=True)
class Conflict:
    kind: str                   # polarity | exclusive-assignment
    subject: str
    parties: tuple[str, ...]
    detail: str
    quotes: tuple[dict, ...]    # evidence for each party

    def to_record(self) -> dict:
        return {"kind": self.kind, "subject": self.subject,
                "parties": list(self.parties), "detail": self.detail,
                "quotes": [dict(q) for q in self.quotes]}


def _evidence_quotes(snapshot: TwinSnapshot, node_id: str) -> list[dict]:
    out = []
    for edge in sorted(snapshot.edges, key=lambda e: e.key):
        if edge.relation == "evidenced-by" and edge.source == node_id:
            frag = snapshot.evidence.get(edge.target)
            if frag is not None:
                out.append({"party": node_id, "evidence": frag.id,
                            "quote": frag.quote,
                            "source_kind": frag.source_kind,
                            "source_key": frag.source_key,
                            "revision": frag.revision})
    return out


def detect_conflicts(snapshot: TwinSnapshot) -> list[Conflict]:
    """Opposite-polarity constraints on one subject; contested exclusives."""
    conflicts: list[Conflict] = []
    by_subject: dict[str, dict[str, list[str]]] = {}
    for edge in snapshot.edges:
        if edge.relation != "constrained-by":
            continue
        polarity = edge.attr("polarity") or "forbids"
        by_subject.setdefault(edge.source, {}).setdefault(
            polarity, []).append(edge.target)
    for subject in sorted(by_subject):
        supports = sorted(by_subject[subject].get("supports", ()))
        forbids = sorted(by_subject[subject].get("forbids", ()))
        for sup in supports:
            for forb in forbids:
                sup_node = snapshot.nodes.get(sup)
                forb_node = snapshot.nodes.get(forb)
                if sup_node is None or forb_node is None:
                    continue
                if not token_set(sup_node.title) & token_set(forb_node.title):
                    continue        # unrelated rules can coexist
                quotes = tuple(_evidence_quotes(snapshot, sup)
                               + _evidence_quotes(snapshot, forb))
                conflicts.append(Conflict(
                    "polarity", subject, (sup, forb),
                    f"{subject} is both supported by {sup} "
                    f"and forbidden by {forb}", quotes))

    assignments: dict[str, list[TypedEdge]] = {}
    for edge in snapshot.edges:
        if edge.relation == "assigned-to":
            assignments.setdefault(edge.source, []).append(edge)
    for responsibility in sorted(assignments):
        edges = sorted(assignments[responsibility], key=lambda e: e.key)
        exclusive = [e for e in edges if e.attr("exclusive") == "true"]
        if exclusive and len(edges) > 1:
            parties = tuple(e.target for e in edges)
            quotes = tuple(_evidence_quotes(snapshot, responsibility))
            conflicts.append(Conflict(
                "exclusive-assignment", responsibility, parties,
                f"{responsibility} is assigned exclusively to "
                f"{exclusive[0].target} but also to others", quotes))
    return conflicts


# --------------------------------------------------------------------------
# The curation desk

class CurationDesk:
    """Proposal queue and feedback log persisted next to the twin store."""

    def __init__(self, store: TwinStore):
        self.store = store
        self.proposals: dict[str, UpdateProposal] = {}
        self.events: list[FeedbackEvent] = []
        self._load()

    # -- persistence --------------------------------------------------------

    def _proposals_path(self):
        return self.store.root / "proposals.json"

    def _events_path(self):
        return self.store.root / "events.log"

    def _load(self) -> None:
        ppath = self._proposals_path()
        if ppath.exists():
            for rec in json.loads(ppath.read_text("utf-8")):
                prop = UpdateProposal.from_record(rec)
                self.proposals[prop.id] = prop
        epath = self._events_path()
        if epath.exists():
            self.events = parse_events(epath.read_text("utf-8"))

    def _persist(self) -> None:
        records = [self.proposals[pid].to_record()
                   for pid in sorted(self.proposals)]
        self._proposals_path().write_text(
            json.dumps(records, sort_keys=True, indent=1) + "\n", "utf-8")
        self._events_path().write_text(serialize_events(self.events),
                                       "utf-8")

    # -- proposals ----------------------------------------------------------

    def submit(self, subject: str, author: str, note: str,
               ops: Sequence[Mapping]) -> UpdateProposal:
        pid = f"p{len(self.proposals) + 1:04d}"
        proposal = UpdateProposal(pid, subject, author, note,
                                  tuple(dict(o) for o in ops))
        self.proposals[pid] = proposal
        self._persist()
        return proposal

    def pending(self) -> list[UpdateProposal]:
        return [self.proposals[pid] for pid in sorted(self.proposals)
                if self.proposals[pid].status == "pending"]

    def get(self, proposal_id: str) -> UpdateProposal:
        prop = self.proposals.get(proposal_id)
        if prop is None:
            raise UnknownProposalError(proposal_id)
        return prop

    def preview(self, proposal_id: str) -> ProposalDelta:
        prop = self.get(proposal_id)
        return dry_run(self.store.snapshot(), prop.ops)

    def review(self, proposal_id: str, verdict: str,
               note: str = "") -> UpdateProposal:
        """Accept applies exactly the previewed ops; reject changes nothing."""
        prop = self.get(proposal_id)
        if prop.status != "pending":
            raise ProposalStateError(
                f"proposal {proposal_id} already {prop.status}")
        if verdict == "accept":
            self.store.apply_ops(prop.ops)
            prop = replace(prop, status="accepted")
            self.record_event("patch-accepted", prop.subject, note,
                              proposal=prop.id)
        elif verdict == "reject":
            prop = replace(prop, status="rejected")
            self.record_event("patch-rejected", prop.subject, note,
                              proposal=prop.id)
        else:
            raise ProposalStateError(f"unknown verdict {verdict!r}")
        self.proposals[prop.id] = prop
        self._persist()
        return prop

    # -- feedback -----------------------------------------------------------

    def record_event(self, kind: str, subject: str, note: str = "",
                     proposal: str = "") -> FeedbackEvent:
        if kind not in EVENT_KINDS:
            raise BadEventError(f"unknown event kind {kind!r}")
        event = FeedbackEvent(len(self.events) + 1, kind, subject, note,
                              proposal)
        self.events.append(event)
        self._persist()
        return event

    def recalibrate(self) -> dict[str, float]:
        """Recompute confidence from the event log and write it back."""
        counts = feedback_counts(self.events)
        updated = {}
        ops = []
        snapshot = self.store.snapshot()
        for subject in sorted(counts):
            node = snapshot.nodes.get(subject)
            if not isinstance(node, KnowledgeNode):
                continue
            accepts, rejects = counts[subject]
            confidence = laplace_confidence(accepts, rejects)
            updated[subject] = confidence
            ops.append({"op": "set-confidence", "subject": subject,
                        "value": confidence})
        if ops:
            self.store.apply_ops(ops)
        return updated

    def conflicts(self, revision: str | None = None) -> list[Conflict]:
        return detect_conflicts(self.store.snapshot(revision))
