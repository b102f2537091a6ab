import pytest
from hypothesis import given, strategies as st

from codetwin.artifact_map import ingest_facts, resolve_references
from codetwin.extractors import extract_tree
from codetwin.history import (
    ChangeRecord,
    HistoryFormatError,
    IssueRecord,
    MissingMapError,
    UnknownParentError,
    UnknownSubjectError,
    anchors_for,
    extract_issue_refs,
    ingest_history,
    link_history,
    parse_history,
    parse_issues,
    serialize_history,
    serialize_issues,
)


def test_issue_refs_found_with_and_without_verbs():
    # [DERIVED] expectations written by hand, not via the regex under test
    cases = {
        "fixes #42": ["#42"],
        "Fixes #42 and closes #7": ["#42", "#7"],
        "see #3, then #3 again": ["#3"],
        "plain #100 mention": ["#100"],
        "issue# 5 and #x": [],
        "": [],
    }
    for message, want in cases.items():
        assert extract_issue_refs(message) == want, message


@given(st.lists(st.text(
    alphabet=st.characters(blacklist_categories=("Cs",),
                           blacklist_characters="\r"),
    max_size=80), min_size=0, max_size=6))
def test_multiline_messages_survive_round_trip(lines):
    message = "\n".join(lines)
    record = ChangeRecord("c1", None, "ana", message, ("a.py",))
    parsed = parse_history(serialize_history([record]))
    assert parsed[0].message == message


def test_leading_dots_are_protected_by_stuffing():
    message = ".\n..\n.hidden\nrevision zzz"
    record = ChangeRecord("c1", None, "ana", message, ("a.py",))
    text = serialize_history([record])
    assert parse_history(text)[0].message == message


def test_issue_bodies_round_trip():
    issues = [IssueRecord("#1", "a title", "line one\n.\nline two"),
              IssueRecord("#2", "other", "")]
    assert parse_issues(serialize_issues(issues)) == issues


def test_history_requires_known_parents():
    text = ("hist/1\n\nrevision c2\nparent c1\nauthor b\nchanged x\n"
            "message\nm\n.\n")
    with pytest.raises(UnknownParentError):
        ingest_history(text)


def test_non_root_records_need_changed_paths():
    records = [ChangeRecord("c1", None, "a", "m", ("x",)),
               ChangeRecord("c2", "c1", "a", "m", ())]
    with pytest.raises(HistoryFormatError):
        ingest_history(serialize_history(records))


def test_parse_errors_carry_record_position():
    text = "hist/1\n\nrevision c1\nauthor a\nbogus line\nmessage\nm\n.\n"
    with pytest.raises(HistoryFormatError) as err:
        parse_history(text)
    assert err.value.record_index == 0


def _maps(timeline):
    out = {}
    for rec in timeline.records:
        tree = timeline.tree_at(rec.revision)
        out[rec.revision] = resolve_references(
            ingest_facts(extract_tree(tree), tree))
    return out


def test_payfix_anchors_match_hand_audit(payfix_timeline):
    # [DERIVED] every anchor enumerated by hand from the fixture history
    result = link_history(payfix_timeline.records, _maps(payfix_timeline))
    assert result.warnings == []
    got = sorted((a.subject, a.anchor_kind, a.target)
                 for a in result.anchors)
    assert got == sorted([
        ("a:pay/validator.py", "introduced-in", "c1"),
        ("a:pay/validator.py#charge", "introduced-in", "c1"),
        ("a:pay/validator.py#validate", "introduced-in", "c1"),
        ("a:tests/validate_test.py", "introduced-in", "c1"),
        ("a:tests/validate_test.py#test_validate_orders", "introduced-in",
         "c1"),
        ("a:docs/payments.md", "introduced-in", "c1"),
        ("a:pay/validator.py", "discussed-in", "#42"),
        ("a:pay/validator.py#charge", "discussed-in", "#42"),
        ("a:pay/validator.py#validate", "discussed-in", "#42"),
        ("a:tests/validate_test.py", "discussed-in", "#42"),
        ("a:tests/validate_test.py#test_validate_orders", "discussed-in",
         "#42"),
        ("a:docs/payments.md", "discussed-in", "#42"),
        ("a:pay/gateway.py", "introduced-in", "c2"),
        ("a:pay/gateway.py#submit", "introduced-in", "c2"),
        ("a:settings.cfg", "introduced-in", "c2"),
        ("a:settings.cfg#mainframe.retry_limit", "introduced-in", "c2"),
        ("a:pay/gateway.py", "discussed-in", "#57"),
        ("a:pay/gateway.py#submit", "discussed-in", "#57"),
        ("a:settings.cfg", "discussed-in", "#57"),
        ("a:settings.cfg#mainframe.retry_limit", "discussed-in", "#57"),
    ])


def test_unmodified_files_are_not_re_anchored(payfix_timeline):
    result = link_history(payfix_timeline.records, _maps(payfix_timeline))
    modified = [a for a in result.anchors if a.anchor_kind == "modified-in"]
    assert modified == []       # c2 only adds files, touches nothing


def test_changed_path_without_nodes_warns():
    records = [ChangeRecord("c1", None, "a", "m", ("ghost.py",))]
    from codetwin.artifact_map import CodeMap

    result = link_history(records, {"c1": CodeMap()})
    assert result.warnings == ["c1: changed path ghost.py has no nodes"]


def test_linking_demands_a_map_per_revision(payfix_timeline):
    with pytest.raises(MissingMapError):
        link_history(payfix_timeline.records, {})


def test_anchor_lookup_respects_revision_range(payfix_timeline):
    result = link_history(payfix_timeline.records, _maps(payfix_timeline))
    subject = "a:pay/gateway.py"
    known = {a.subject for a in result.anchors}
    full = anchors_for(subject, None, payfix_timeline.records,
                       result.anchors, known)
    assert [a.anchor_kind for a in full] == ["discussed-in",
                                             "introduced-in"]
    only_c1 = anchors_for(subject, ("c1", "c1"), payfix_timeline.records,
                          result.anchors, known)
    assert only_c1 == []
    with pytest.raises(UnknownSubjectError):
        anchors_for("a:nothing", None, payfix_timeline.records,
                    result.anchors, known)
