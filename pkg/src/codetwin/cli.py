"""Command line surface. Outputs are the exact bytes the HTTP service emits
for the matching endpoint, which keeps scripted and served consumers in
agreement.

A source bundle is a directory shaped like::

    bundle/
      history.hist            change records, oldest first
      issues.iss              optional issue records
      revisions/<revision>/   full source tree at that revision
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .compiler import compile_package
from .config import TwinConfig, load_config
from .curation import CurationDesk
from .extractors import load_sources
from .history import ChangeRecord, extract_issue_refs, parse_issues
from .history import ingest_history
from .model import signature_table
from .query import QuerySpec, impact_of_change, run_query
from .store import RepoTimeline, TwinStore, full_rebuild, snapshot_bytes


def _load_bundle(bundle: Path) -> RepoTimeline:
    records = ingest_history((bundle / "history.hist").read_text("utf-8"))
    issues_path = bundle / "issues.iss"
    issues = parse_issues(issues_path.read_text("utf-8")) \
        if issues_path.exists() else []
    trees = {}
    for rec in records:
        tree_dir = bundle / "revisions" / rec.revision
        if not tree_dir.is_dir():
            raise click.ClickException(
                f"bundle has no tree for revision {rec.revision}")
        trees[rec.revision] = load_sources(tree_dir)
    return RepoTimeline(records, issues, trees)


def _open(store_dir: str) -> TwinStore:
    try:
        return TwinStore.open(store_dir)
    except FileNotFoundError as exc:
        raise click.ClickException(f"not a twin store: {store_dir} ({exc})")


def _config(path: str | None) -> TwinConfig:
    return load_config(path)


@click.group()
def main():
    """Version-aware knowledge graph over a software repository."""


@main.command()
@click.argument("bundle", type=click.Path(exists=True, file_okay=False))
@click.argument("store_dir", type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="cfg/1 file; TWIN_* env still applies.")
def build(bundle, store_dir, config_path):
    """Build a twin store from a source bundle."""
    config = _config(config_path)
    timeline = _load_bundle(Path(bundle))
    store = TwinStore.build(store_dir, timeline,
                            settings=config.build_settings())
    for warning in store.warnings():
        click.echo(f"warning: {warning}", err=True)
    click.echo(f"built {len(store.revisions)} snapshots, "
               f"head {store.head}")


@main.command()
@click.argument("store_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("tree_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--revision", required=True)
@click.option("--author", required=True)
@click.option("--message", required=True)
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None)
def update(store_dir, tree_dir, revision, author, message, config_path):
    """Apply one new revision incrementally; TREE_DIR is the full new tree."""
    config = _config(config_path)
    store = _open(store_dir)
    store.settings = config.build_settings()
    new_tree = load_sources(tree_dir)
    old_tree = store.timeline.trees[store.head]
    changes: dict[str, str | None] = {}
    for path in sorted(set(old_tree) | set(new_tree)):
        if old_tree.get(path) != new_tree.get(path):
            changes[path] = new_tree.get(path)
    if not changes:
        raise click.ClickException("tree is identical to the head revision")
    record = ChangeRecord(revision, store.head, author, message,
                          tuple(sorted(changes)),
                          tuple(extract_issue_refs(message)))
    store.update(record, changes)
    click.echo(f"updated to {revision} "
               f"({len(changes)} changed paths)")


@main.command()
@click.argument("store_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("text")
@click.option("--revision", default=None)
@click.option("--hop-bound", default=None, type=int)
@click.option("--node-budget", default=None, type=int)
@click.option("--seed-limit", default=None, type=int)
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None)
def query(store_dir, text, revision, hop_bound, node_budget, seed_limit,
          config_path):
    """Retrieve the ranked subgraph for a natural language query."""
    config = _config(config_path)
    store = _open(store_dir)
    spec = QuerySpec(
        text=text, revision=revision,
        hop_bound=hop_bound if hop_bound is not None else config.hop_bound,
        node_budget=node_budget if node_budget is not None
        else config.node_budget,
        seed_limit=seed_limit if seed_limit is not None
        else config.seed_limit)
    result = run_query(store.snapshot(spec.revision), spec)
    sys.stdout.write(result.serialize())


@main.command()
@click.argument("store_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("nodes", nargs=-1, required=True)
@click.option("--revision", default=None)
@click.option("--hop-bound", default=3, type=int)
def impact(store_dir, nodes, revision, hop_bound):
    """Dependents, covering tests and governing constraints of a change."""
    store = _open(store_dir)
    result = impact_of_change(store.snapshot(revision), list(nodes),
                              hop_bound)
    sys.stdout.write(result.serialize())


@main.command()
@click.argument("store_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("text")
@click.option("--revision", default=None)
@click.option("--token-budget", default=None, type=int)
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None)
def compile(store_dir, text, revision, token_budget, config_path):
    """Compile a token-budgeted context package for a query."""
    config = _config(config_path)
    store = _open(store_dir)
    spec = QuerySpec(text=text, revision=revision,
                     hop_bound=config.hop_bound,
                     node_budget=config.node_budget,
                     seed_limit=config.seed_limit)
    snap = store.snapshot(spec.revision)
    result = run_query(snap, spec)
    budget = token_budget if token_budget is not None \
        else config.token_budget
    package = compile_package(snap, result, budget)
    sys.stdout.write(package.serialize())


@main.command()
@click.argument("store_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("subject")
@click.option("--author", required=True)
@click.option("--note", default="")
@click.option("--ops", "ops_json", required=True,
              help="JSON list of overlay operations.")
def propose(store_dir, subject, author, note, ops_json):
    """Submit an update proposal and print its dry-run delta."""
    store = _open(store_dir)
    desk = CurationDesk(store)
    ops = json.loads(ops_json)
    prop = desk.submit(subject, author, note, ops)
    delta = desk.preview(prop.id)
    click.echo(json.dumps({"proposal": prop.to_record(),
                           "delta": delta.to_record()},
                          sort_keys=True, indent=1))


@main.command()
@click.argument("store_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("proposal_id")
@click.argument("verdict", type=click.Choice(["accept", "reject"]))
@click.option("--note", default="")
def review(store_dir, proposal_id, verdict, note):
    """Accept or reject a pending proposal."""
    store = _open(store_dir)
    desk = CurationDesk(store)
    prop = desk.review(proposal_id, verdict, note)
    click.echo(json.dumps({"proposal": prop.to_record()},
                          sort_keys=True, indent=1))


@main.command()
@click.argument("store_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("kind")
@click.argument("subject")
@click.option("--note", default="")
def feedback(store_dir, kind, subject, note):
    """Append one feedback event to the curation log."""
    store = _open(store_dir)
    desk = CurationDesk(store)
    event = desk.record_event(kind, subject, note)
    click.echo(json.dumps({"event": event.to_record()},
                          sort_keys=True, indent=1))


@main.command()
@click.argument("store_dir", type=click.Path(exists=True, file_okay=False))
def recalibrate(store_dir):
    """Recompute knowledge confidence from the feedback log."""
    store = _open(store_dir)
    desk = CurationDesk(store)
    updated = desk.recalibrate()
    click.echo(json.dumps({"updated": updated}, sort_keys=True, indent=1))


@main.command()
@click.argument("store_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--revision", default=None)
def conflicts(store_dir, revision):
    """List contradictory constraints and contested assignments."""
    store = _open(store_dir)
    desk = CurationDesk(store)
    found = desk.conflicts(revision)
    click.echo(json.dumps({"conflicts": [c.to_record() for c in found]},
                          sort_keys=True, indent=1))


@main.command()
@click.argument("store_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--revision", default=None)
def validate(store_dir, revision):
    """Run schema and integrity validation; nonzero exit on findings."""
    store = _open(store_dir)
    report = store.validate(revision)
    for finding in report.findings:
        click.echo(f"{finding.rule}: {finding.subject}: {finding.message}")
    if not report.ok:
        raise SystemExit(1)
    click.echo("ok")


@main.command()
@click.argument("store_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--revision", default=None)
@click.option("--what", type=click.Choice(["snapshot", "relations"]),
              default="snapshot")
def export(store_dir, revision, what):
    """Write the canonical snapshot bytes (or relation table) to stdout."""
    store = _open(store_dir)
    if what == "relations":
        click.echo(json.dumps(signature_table(), sort_keys=True, indent=1))
        return
    sys.stdout.buffer.write(snapshot_bytes(store.snapshot(revision)))


@main.command()
@click.argument("store_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8123, type=int)
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None)
def serve(store_dir, host, port, config_path):
    """Serve the twin over HTTP."""
    from .service import serve as run

    run(store_dir, host=host, port=port, config=_config(config_path))


@main.command()
@click.argument("bundle", type=click.Path(exists=True, file_okay=False))
def check(bundle):
    """Rebuild a bundle in memory and report validation findings."""
    timeline = _load_bundle(Path(bundle))
    snapshots, linked = full_rebuild(timeline)
    head = timeline.records[-1].revision
    report = snapshots[head].validate(
        [r.revision for r in timeline.records],
        [i.key for i in timeline.issues])
    for warning in linked.warnings:
        click.echo(f"warning: {warning}", err=True)
    for finding in report.findings:
        click.echo(f"{finding.rule}: {finding.subject}: {finding.message}")
    if not report.ok:
        raise SystemExit(1)
    click.echo(f"ok: {len(snapshots)} snapshots validate")


if __name__ == "__main__":
    main()
