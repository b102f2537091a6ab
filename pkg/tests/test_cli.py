import json
import shutil

import pytest
from click.testing import CliRunner

from codetwin.cli import main
from codetwin.query import QuerySpec, run_query
from codetwin.store import TwinStore, snapshot_bytes


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def built_store(tmp_path, payfix_bundle, runner):
    store_dir = tmp_path / "store"
    result = runner.invoke(main, ["build", str(payfix_bundle),
                                  str(store_dir)])
    assert result.exit_code == 0, result.output
    return store_dir


def test_build_reports_snapshot_count_and_head(tmp_path, payfix_bundle,
                                               runner):
    store_dir = tmp_path / "store"
    result = runner.invoke(main, ["build", str(payfix_bundle),
                                  str(store_dir)])
    assert result.exit_code == 0
    assert "built 2 snapshots, head c2" in result.output
    assert TwinStore.open(store_dir).revisions == ["c1", "c2"]


def test_check_validates_a_bundle_in_memory(payfix_bundle, runner):
    result = runner.invoke(main, ["check", str(payfix_bundle)])
    assert result.exit_code == 0
    assert "ok: 2 snapshots validate" in result.output


def test_query_prints_the_canonical_result(built_store, payfix_head, runner):
    result = runner.invoke(main, ["query", str(built_store),
                                  "refactor payment validation to async"])
    assert result.exit_code == 0
    spec = QuerySpec("refactor payment validation to async")
    assert result.output == run_query(payfix_head, spec).serialize()


def test_impact_prints_dependents_tests_and_constraints(built_store, runner):
    result = runner.invoke(main, ["impact", str(built_store),
                                  "a:pay/validator.py#validate"])
    assert result.exit_code == 0
    body = json.loads(result.output)
    assert [n["id"] for n in body["impacted"]] == ["a:pay/gateway.py#submit"]
    assert body["tests"] == ["a:tests/validate_test.py#test_validate_orders"]


def test_compile_honors_the_token_budget(built_store, runner):
    result = runner.invoke(main, ["compile", str(built_store),
                                  "payment validation",
                                  "--token-budget", "500"])
    assert result.exit_code == 0
    body = json.loads(result.output)
    assert body["version"] == "ctx/1"
    assert body["tokens"] <= 500


def test_update_applies_an_incremental_revision(built_store, payfix_bundle,
                                                tmp_path, runner):
    tree_dir = tmp_path / "c3"
    shutil.copytree(payfix_bundle / "revisions" / "c2", tree_dir)
    (tree_dir / "settings.cfg").write_text("[mainframe]\nretry_limit = 9\n")
    result = runner.invoke(main, ["update", str(built_store), str(tree_dir),
                                  "--revision", "c3", "--author", "kim",
                                  "--message",
                                  "raise retries because peaks spiked"])
    assert result.exit_code == 0, result.output
    assert "updated to c3 (1 changed paths)" in result.output
    store = TwinStore.open(built_store)
    assert store.head == "c3"
    assert store.validate().ok


def test_update_refuses_an_identical_tree(built_store, payfix_bundle,
                                          runner):
    result = runner.invoke(main, ["update", str(built_store),
                                  str(payfix_bundle / "revisions" / "c2"),
                                  "--revision", "c3", "--author", "kim",
                                  "--message", "noop"])
    assert result.exit_code != 0
    assert "identical" in result.output


def test_validate_exits_zero_on_a_clean_store(built_store, runner):
    result = runner.invoke(main, ["validate", str(built_store)])
    assert result.exit_code == 0
    assert result.output == "ok\n"


def test_export_writes_the_snapshot_bytes(built_store, payfix_head, runner):
    result = runner.invoke(main, ["export", str(built_store)])
    assert result.exit_code == 0
    assert result.stdout_bytes == snapshot_bytes(payfix_head)


def test_export_relations_lists_the_signature_table(built_store, runner):
    result = runner.invoke(main, ["export", str(built_store),
                                  "--what", "relations"])
    assert result.exit_code == 0
    table = json.loads(result.output)
    assert "constrained-by" in {row["relation"] for row in table}


def test_propose_review_feedback_flow(built_store, runner):
    ops = json.dumps([{"op": "set-status",
                       "subject": "k:concept:payment-validation",
                       "value": "curated"}])
    proposed = runner.invoke(main, ["propose", str(built_store),
                                    "k:concept:payment-validation",
                                    "--author", "kim", "--ops", ops])
    assert proposed.exit_code == 0, proposed.output
    body = json.loads(proposed.output)
    pid = body["proposal"]["id"]
    assert body["delta"]["nodes_changed"]

    reviewed = runner.invoke(main, ["review", str(built_store), pid,
                                    "accept"])
    assert reviewed.exit_code == 0
    assert json.loads(reviewed.output)["proposal"]["status"] == "accepted"

    store = TwinStore.open(built_store)
    assert store.snapshot().nodes["k:concept:payment-validation"].status == \
        "curated"

    felt = runner.invoke(main, ["feedback", str(built_store),
                                "suggestion-chosen",
                                "k:concept:payment-validation"])
    assert felt.exit_code == 0

    tuned = runner.invoke(main, ["recalibrate", str(built_store)])
    assert tuned.exit_code == 0
    updated = json.loads(tuned.output)["updated"]
    # accept + suggestion-chosen: (1+2)/(2+2)
    assert updated["k:concept:payment-validation"] == pytest.approx(0.75)


def test_conflicts_command_lists_findings(built_store, runner):
    store = TwinStore.open(built_store)
    store.apply_ops([
        {"op": "add-node", "node": {
            "id": "k:constraint:allow-unordered-requests",
            "layer": "knowledge", "kind": "constraint",
            "title": "allow unordered requests", "summary": "",
            "status": "curated", "confidence": 0.7}},
        {"op": "add-edge", "edge": {
            "source": "a:pay/validator.py", "relation": "constrained-by",
            "target": "k:constraint:allow-unordered-requests",
            "attributes": {"polarity": "supports"}}},
    ])
    result = runner.invoke(main, ["conflicts", str(built_store)])
    assert result.exit_code == 0
    body = json.loads(result.output)
    assert [c["kind"] for c in body["conflicts"]] == ["polarity"]


def test_missing_store_is_a_clean_error(tmp_path, runner):
    empty = tmp_path / "nothing"
    empty.mkdir()
    result = runner.invoke(main, ["validate", str(empty)])
    assert result.exit_code != 0
    assert "not a twin store" in result.output
