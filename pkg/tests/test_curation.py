import pytest

from codetwin.curation import (
    BadEventError,
    CurationDesk,
    FeedbackEvent,
    ProposalStateError,
    UnknownProposalError,
    detect_conflicts,
    dry_run,
    feedback_counts,
    laplace_confidence,
    parse_events,
    serialize_events,
)
from codetwin.store import snapshot_bytes


def test_confidence_rule_hits_hand_computed_points():
    # [DERIVED] values computed by hand from (1+a)/(2+a+r)
    assert laplace_confidence(0, 0) == 0.5
    assert laplace_confidence(1, 0) == pytest.approx(2 / 3)
    assert laplace_confidence(0, 1) == pytest.approx(1 / 3)
    assert laplace_confidence(3, 1) == pytest.approx(4 / 6)
    assert laplace_confidence(10, 10) == pytest.approx(11 / 22)


def test_confidence_stays_inside_the_open_interval():
    for a in range(0, 25):
        for r in range(0, 25):
            c = laplace_confidence(a, r)
            assert 0.0 < c < 1.0


def test_confidence_rejects_negative_counts():
    with pytest.raises(ValueError):
        laplace_confidence(-1, 0)


def test_feedback_counts_split_by_polarity():
    events = [FeedbackEvent(1, "patch-accepted", "k:a"),
              FeedbackEvent(2, "patch-rejected", "k:a"),
              FeedbackEvent(3, "summary-edited", "k:a"),
              FeedbackEvent(4, "suggestion-chosen", "k:b"),
              FeedbackEvent(5, "boundary-overridden", "k:b")]
    assert feedback_counts(events) == {"k:a": (1, 1), "k:b": (1, 1)}


def test_event_log_round_trips():
    events = [FeedbackEvent(1, "patch-accepted", "k:a", "fine", "p0001")]
    assert parse_events(serialize_events(events)) == events


def test_dry_run_reports_the_exact_field_change(payfix_store):
    subject = "k:concept:payment-validation"
    delta = dry_run(payfix_store.snapshot(),
                    [{"op": "set-summary", "subject": subject,
                      "value": "checked ordering of payment requests"}])
    assert [c["id"] for c in delta.nodes_changed] == [subject]
    before = delta.nodes_changed[0]["before"]
    after = delta.nodes_changed[0]["after"]
    assert before["summary"] != after["summary"]
    assert {k: v for k, v in before.items() if k != "summary"} == \
        {k: v for k, v in after.items() if k != "summary"}
    assert not delta.nodes_added and not delta.edges_added


def test_dry_run_of_a_noop_is_empty(payfix_store):
    snap = payfix_store.snapshot()
    node = snap.nodes["k:concept:payment-validation"]
    delta = dry_run(snap, [{"op": "set-status", "subject": node.id,
                            "value": node.status}])
    assert delta.empty


def test_rejecting_a_proposal_changes_no_snapshot_bytes(payfix_store):
    desk = CurationDesk(payfix_store)
    before = {r: snapshot_bytes(payfix_store.snapshot(r))
              for r in payfix_store.revisions}
    prop = desk.submit("k:concept:payment-validation", "kim", "try it",
                       [{"op": "set-status",
                         "subject": "k:concept:payment-validation",
                         "value": "curated"}])
    desk.review(prop.id, "reject", "not yet")
    after = {r: snapshot_bytes(payfix_store.snapshot(r))
             for r in payfix_store.revisions}
    assert before == after
    assert desk.get(prop.id).status == "rejected"


def test_accepting_applies_exactly_the_previewed_delta(payfix_store):
    desk = CurationDesk(payfix_store)
    subject = "k:concept:payment-validation"
    ops = [{"op": "set-status", "subject": subject, "value": "curated"}]
    prop = desk.submit(subject, "kim", "", ops)
    delta = desk.preview(prop.id)
    desk.review(prop.id, "accept")
    node = payfix_store.snapshot().nodes[subject]
    assert node.to_record() == delta.nodes_changed[0]["after"]
    # and nothing else moved
    follow_up = dry_run(payfix_store.snapshot(), ops)
    assert follow_up.empty


def test_double_review_is_refused(payfix_store):
    desk = CurationDesk(payfix_store)
    prop = desk.submit("k:concept:payment-validation", "kim", "", [
        {"op": "set-status", "subject": "k:concept:payment-validation",
         "value": "curated"}])
    desk.review(prop.id, "reject")
    with pytest.raises(ProposalStateError):
        desk.review(prop.id, "accept")


def test_unknown_proposals_and_verdicts_error(payfix_store):
    desk = CurationDesk(payfix_store)
    with pytest.raises(UnknownProposalError):
        desk.review("p9999", "accept")
    prop = desk.submit("k:concept:payment-validation", "kim", "", [
        {"op": "set-status", "subject": "k:concept:payment-validation",
         "value": "curated"}])
    with pytest.raises(ProposalStateError):
        desk.review(prop.id, "maybe")


def test_reviews_append_feedback_events(payfix_store):
    desk = CurationDesk(payfix_store)
    prop = desk.submit("k:concept:payment-validation", "kim", "", [
        {"op": "set-status", "subject": "k:concept:payment-validation",
         "value": "curated"}])
    desk.review(prop.id, "accept")
    assert [e.kind for e in desk.events] == ["patch-accepted"]
    assert desk.events[0].proposal == prop.id


def test_recalibration_rewrites_confidence_from_the_log(payfix_store):
    desk = CurationDesk(payfix_store)
    subject = "k:concept:payment-validation"
    desk.record_event("patch-accepted", subject)
    desk.record_event("patch-accepted", subject)
    desk.record_event("context-corrected", subject)
    updated = desk.recalibrate()
    assert updated == {subject: pytest.approx(3 / 5)}
    assert payfix_store.snapshot().nodes[subject].confidence == \
        pytest.approx(3 / 5)


def test_unknown_event_kinds_are_refused(payfix_store):
    desk = CurationDesk(payfix_store)
    with pytest.raises(BadEventError):
        desk.record_event("applauded", "k:x")


def test_desk_state_survives_reopen(payfix_store):
    desk = CurationDesk(payfix_store)
    prop = desk.submit("k:concept:payment-validation", "kim", "note", [
        {"op": "set-status", "subject": "k:concept:payment-validation",
         "value": "curated"}])
    desk.record_event("summary-edited", prop.subject)
    again = CurationDesk(payfix_store)
    assert again.get(prop.id) == prop
    assert again.events == desk.events


def test_opposite_polarity_on_shared_topic_is_a_conflict(payfix_store):
    subject = "a:pay/validator.py"
    forbidden = "k:constraint:add-sync-lock-because-mainframe-requires-" \
        "ordered-requests"
    payfix_store.apply_ops([
        {"op": "add-node", "node": {
            "id": "k:constraint:allow-unordered-requests-in-batch-mode",
            "layer": "knowledge", "kind": "constraint",
            "title": "allow unordered requests in batch mode",
            "summary": "", "status": "curated", "confidence": 0.7}},
        {"op": "add-edge", "edge": {
            "source": subject, "relation": "constrained-by",
            "target": "k:constraint:allow-unordered-requests-in-batch-mode",
            "attributes": {"polarity": "supports"}}},
    ])
    conflicts = detect_conflicts(payfix_store.snapshot())
    assert [c.kind for c in conflicts] == ["polarity"]
    conflict = conflicts[0]
    assert conflict.subject == subject
    assert set(conflict.parties) == {
        forbidden, "k:constraint:allow-unordered-requests-in-batch-mode"}
    # the extracted side still carries its verbatim quote
    assert any(q["quote"] == "add sync lock because mainframe requires "
               "ordered requests" for q in conflict.quotes)


def test_unrelated_polarity_pairs_are_not_conflicts(payfix_store):
    payfix_store.apply_ops([
        {"op": "add-node", "node": {
            "id": "k:constraint:logs-rotate-weekly", "layer": "knowledge",
            "kind": "constraint", "title": "logs rotate weekly",
            "summary": "", "status": "curated", "confidence": 0.7}},
        {"op": "add-edge", "edge": {
            "source": "a:pay/validator.py", "relation": "constrained-by",
            "target": "k:constraint:logs-rotate-weekly",
            "attributes": {"polarity": "supports"}}},
    ])
    assert detect_conflicts(payfix_store.snapshot()) == []


def test_contested_exclusive_assignment_is_a_conflict(payfix_store):
    responsibility = "k:responsibility:charge-submit-valid"
    payfix_store.apply_ops([
        {"op": "remove-edge", "edge": {
            "source": responsibility, "relation": "assigned-to",
            "target": "a:pay/validator.py"}},
        {"op": "add-edge", "edge": {
            "source": responsibility, "relation": "assigned-to",
            "target": "a:pay/validator.py",
            "attributes": {"exclusive": "true"}}},
    ])
    conflicts = detect_conflicts(payfix_store.snapshot())
    assert [c.kind for c in conflicts] == ["exclusive-assignment"]
    assert conflicts[0].subject == responsibility
