"""History and issue ingestion plus version anchoring.

History comes in through the ``hist/1`` export format (an adapter away from
any real version-control tool), issues through ``iss/1``. Anchoring is
content-hash based: a member counts as modified in a revision only if its
governing text hash changed between the parent map and the revision map.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .artifact_map import CodeMap

HIST_VERSION = "hist/1"
ISS_VERSION = "iss/1"

_ISSUE_REF = re.compile(r"(?:(?:fixes|closes|see)\s+)?#(\d+)", re.IGNORECASE)


class HistoryFormatError(ValueError):
    def __init__(self, message: str, record_index: int = -1):
        if record_index >= 0:
            message = f"record {record_index}: {message}"
        super().__init__(message)
        self.record_index = record_index


class UnknownParentError(HistoryFormatError):
    pass


class MissingMapError(KeyError):
    pass


class UnknownSubjectError(KeyError):
    pass


@dataclass(frozen=True)
class ChangeRecord:
    revision: str
    parent: str | None
    author: str
    message: str
    changed_paths: tuple[str, ...]
    issue_refs: tuple[str, ...] = ()

    def to_record(self) -> dict:
        return {"revision": self.revision, "parent": self.parent,
                "author": self.author, "message": self.message,
                "changed_paths": list(self.changed_paths),
                "issue_refs": list(self.issue_refs)}

    @staticmethod
    def from_record(rec: Mapping) -> "ChangeRecord":
        return ChangeRecord(rec["revision"], rec.get("parent"), rec["author"],
                            rec["message"], tuple(rec["changed_paths"]),
                            tuple(rec.get("issue_refs", ())))


@dataclass(frozen=True)
class IssueRecord:
    key: str
    title: str
    body: str

    def to_record(self) -> dict:
        return {"key": self.key, "title": self.title, "body": self.body}

    @staticmethod
    def from_record(rec: Mapping) -> "IssueRecord":
        return IssueRecord(rec["key"], rec["title"], rec["body"])


@dataclass(frozen=True)
class TraceAnchor:
    subject: str
    anchor_kind: str            # introduced-in | modified-in | referenced-in | discussed-in
    target: str                 # revision id or issue key
    revision: str               # carrying record's revision

    def to_record(self) -> dict:
        return {"subject": self.subject, "anchor_kind": self.anchor_kind,
                "target": self.target, "revision": self.revision}

    @staticmethod
    def from_record(rec: Mapping) -> "TraceAnchor":
        return TraceAnchor(rec["subject"], rec["anchor_kind"], rec["target"],
                           rec["revision"])


def extract_issue_refs(message: str) -> list[str]:
    """``#<digits>`` tokens in order of appearance, deduplicated."""
    seen: list[str] = []
    for match in _ISSUE_REF.finditer(message):
        key = f"#{match.group(1)}"
        if key not in seen:
            seen.append(key)
    return seen


# --------------------------------------------------------------------------
# hist/1 and iss/1

def _dot_stuff(lines: Iterable[str]) -> list[str]:
    return ["." + line if line.startswith(".") else line for line in lines]


def _dot_unstuff(lines: Iterable[str]) -> list[str]:
    return [line[1:] if line.startswith("..") else line for line in lines]


def serialize_history(records: Sequence[ChangeRecord]) -> str:
    blocks = [HIST_VERSION]
    for rec in records:
        lines = [f"revision {rec.revision}",
                 f"parent {rec.parent if rec.parent is not None else '-'}",
                 f"author {rec.author}"]
        lines += [f"changed {p}" for p in rec.changed_paths]
        lines.append("message")
        lines += _dot_stuff(rec.message.split("\n"))
        lines.append(".")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def parse_history(text: str) -> list[ChangeRecord]:
    # split on "\n" only: message bodies are verbatim and may contain
    # characters splitlines() would treat as line breaks
    lines = text.split("\n")
    if not lines or lines[0].strip() != HIST_VERSION:
        raise HistoryFormatError(f"expected version tag {HIST_VERSION!r}")
    records: list[ChangeRecord] = []
    i = 1
    index = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        fields: dict[str, str] = {}
        changed: list[str] = []
        while i < len(lines) and lines[i].strip() and lines[i] != "message":
            key, _, value = lines[i].partition(" ")
            if key == "changed":
                changed.append(value)
            elif key in ("revision", "parent", "author"):
                fields[key] = value
            else:
                raise HistoryFormatError(f"unexpected line {lines[i]!r}", index)
            i += 1
        if i >= len(lines) or lines[i] != "message":
            raise HistoryFormatError("missing message block", index)
        i += 1
        body: list[str] = []
        while i < len(lines) and lines[i] != ".":
            body.append(lines[i])
            i += 1
        if i >= len(lines):
            raise HistoryFormatError("unterminated message", index)
        i += 1
        if "revision" not in fields or "author" not in fields:
            raise HistoryFormatError("missing revision or author", index)
        message = "\n".join(_dot_unstuff(body))
        parent = fields.get("parent", "-")
        records.append(ChangeRecord(
            revision=fields["revision"],
            parent=None if parent == "-" else parent,
            author=fields["author"], message=message,
            changed_paths=tuple(changed),
            issue_refs=tuple(extract_issue_refs(message))))
        index += 1
    return records


def ingest_history(text: str) -> list[ChangeRecord]:
    """Parse hist/1 and validate the linear parent chain."""
    records = parse_history(text)
    seen: set[str] = set()
    for index, rec in enumerate(records):
        if rec.parent is not None and rec.parent not in seen:
            raise UnknownParentError(
                f"parent {rec.parent!r} not in log", index)
        if rec.parent is not None and not rec.changed_paths:
            raise HistoryFormatError("non-root record with no changed paths",
                                     index)
        seen.add(rec.revision)
    return records


def serialize_issues(issues: Sequence[IssueRecord]) -> str:
    blocks = [ISS_VERSION]
    for iss in issues:
        lines = [f"issue {iss.key}", f"title {iss.title}", "body"]
        lines += _dot_stuff(iss.body.split("\n"))
        lines.append(".")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def parse_issues(text: str) -> list[IssueRecord]:
    lines = text.split("\n")
    if not lines or lines[0].strip() != ISS_VERSION:
        raise HistoryFormatError(f"expected version tag {ISS_VERSION!r}")
    issues: list[IssueRecord] = []
    i = 1
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        if not lines[i].startswith("issue "):
            raise HistoryFormatError(f"expected issue line, got {lines[i]!r}")
        key = lines[i][len("issue "):]
        i += 1
        if i >= len(lines) or not lines[i].startswith("title "):
            raise HistoryFormatError(f"issue {key}: missing title")
        title = lines[i][len("title "):]
        i += 1
        if i >= len(lines) or lines[i] != "body":
            raise HistoryFormatError(f"issue {key}: missing body block")
        i += 1
        body: list[str] = []
        while i < len(lines) and lines[i] != ".":
            body.append(lines[i])
            i += 1
        if i >= len(lines):
            raise HistoryFormatError(f"issue {key}: unterminated body")
        i += 1
        issues.append(IssueRecord(key, title, "\n".join(_dot_unstuff(body))))
    return issues


# --------------------------------------------------------------------------
# Anchoring

@dataclass
class LinkResult:
    anchors: list[TraceAnchor] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def link_history(records: Sequence[ChangeRecord],
                 maps_by_revision: Mapping[str, CodeMap]) -> LinkResult:
    """Anchor file and member nodes to the revisions that touched them."""
    for rec in records:
        if rec.revision not in maps_by_revision:
            raise MissingMapError(rec.revision)
    result = LinkResult()
    empty = CodeMap()
    for rec in records:
        new_map = maps_by_revision[rec.revision]
        old_map = maps_by_revision.get(rec.parent, empty) \
            if rec.parent else empty
        for path in rec.changed_paths:
            touched = sorted(
                (n for n in new_map.nodes.values() if n.path == path),
                key=lambda n: n.id)
            if not touched and not any(
                    n.path == path for n in old_map.nodes.values()):
                result.warnings.append(
                    f"{rec.revision}: changed path {path} has no nodes")
                continue
            changed_here = []
            for node in touched:
                prior = old_map.nodes.get(node.id)
                if prior is None:
                    kind = "introduced-in"
                elif prior.content_hash != node.content_hash:
                    kind = "modified-in"
                else:
                    continue
                result.anchors.append(TraceAnchor(node.id, kind,
                                                  rec.revision, rec.revision))
                changed_here.append(node.id)
            for issue_key in rec.issue_refs:
                for node_id in changed_here:
                    result.anchors.append(TraceAnchor(
                        node_id, "discussed-in", issue_key, rec.revision))
    return result


def anchors_for(subject: str,
                revision_range: tuple[str, str] | None,
                records: Sequence[ChangeRecord],
                anchors: Iterable[TraceAnchor],
                known_subjects: set[str] | None = None) -> list[TraceAnchor]:
    """Anchors for one subject within an inclusive revision range."""
    if known_subjects is not None and subject not in known_subjects:
        raise UnknownSubjectError(subject)
    order = {rec.revision: i for i, rec in enumerate(records)}
    if revision_range is None:
        lo, hi = 0, len(records) - 1
    else:
        start, end = revision_range
        if start not in order or end not in order:
            return []
        lo, hi = order[start], order[end]
    if lo > hi:
        return []
    picked = [a for a in anchors
              if a.subject == subject and a.revision in order
              and lo <= order[a.revision] <= hi]
    picked.sort(key=lambda a: (order[a.revision], a.anchor_kind, a.target))
    return picked
