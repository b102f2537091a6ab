import pytest

from codetwin.facts import (
    CodeFact,
    FactFormatError,
    declare_file,
    declare_member,
    declare_module,
    edge_fact,
    parse_facts,
    serialize_facts,
)


SAMPLE = [
    declare_module("pay"),
    declare_file("pay/validator.py"),
    declare_file("docs/a.md", "document"),
    declare_member("declares-function", "pay/validator.py", "validate",
                   (3, 5)),
    declare_member("declares-function", "pay/validator.py", "_helper",
                   (7, 8), "internal"),
    declare_member("declares-config-entry", "settings.cfg", "db.host",
                   (2, 2)),
    edge_fact("calls", "pay/validator.py#validate", symbol="charge"),
    edge_fact("imports", "pay/validator.py", target="pay/gateway.py"),
]


def test_stream_round_trips():
    text = serialize_facts(SAMPLE)
    assert text.startswith("facts/1\n")
    assert parse_facts(text) == SAMPLE


def test_round_trip_is_stable_under_reserialization():
    text = serialize_facts(SAMPLE)
    assert serialize_facts(parse_facts(text)) == text


def test_missing_version_tag_is_rejected():
    with pytest.raises(FactFormatError):
        parse_facts('{"fact": "declares-module", "path": "x"}\n')


def test_malformed_records_report_their_line():
    text = "facts/1\n" \
        '{"fact": "declares-module", "path": "x"}\n' \
        "{broken\n"
    with pytest.raises(FactFormatError) as err:
        parse_facts(text)
    assert err.value.line == 3


@pytest.mark.parametrize("record,reason", [
    ('{"fact": "declares-banana", "path": "x"}', "unknown fact kind"),
    ('{"fact": "declares-function", "path": "x"}', "needs name and span"),
    ('{"fact": "declares-file"}', "needs a path"),
    ('{"fact": "edge-fact", "relation": "calls"}', "needs relation and"),
    ('{"fact": "edge-fact", "relation": "calls", "source": "a"}',
     "needs target or symbol"),
    ('{"fact": "declares-file", "path": "x", "kind": "movie"}',
     "bad file kind"),
])
def test_invalid_records_are_rejected(record, reason):
    with pytest.raises(FactFormatError) as err:
        parse_facts(f"facts/1\n{record}\n")
    assert reason in str(err.value)


def test_sort_key_orders_declares_before_edges():
    ordered = sorted(SAMPLE, key=CodeFact.sort_key)
    kinds = [f.fact_kind for f in ordered]
    first_edge = kinds.index("edge-fact")
    assert all(k == "edge-fact" for k in kinds[first_edge:])


def test_blank_lines_are_tolerated():
    text = "facts/1\n\n" + serialize_facts(SAMPLE).split("\n", 1)[1]
    assert parse_facts(text) == SAMPLE
